"""Command-line front end: ``spdcsim run|hom|epr|ces|verify|bench``.

Data goes to stdout (CSV with a commented header, or JSON lines), diagnostics
to stderr. Exit codes: 0 success, 2 parse/validation error, 3 numerical
degeneracy, 4 undefined visibility.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import runner
from .dsl import parse
from .errors import InvalidArgument, NumericalDegeneracy, UndefinedVisibility
from .experiments import (
    CesConfig,
    EprConfig,
    HomConfig,
    ces_visibility,
    epr_visibility,
    hom_visibility,
    lambda2_to_mu,
    mu_to_lambda2,
    per_arm_transmittance,
)

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE, EXIT_VISIBILITY = 0, 2, 3, 4
CIRCUIT_DIR = Path(__file__).with_name("circuits")


# -- output -------------------------------------------------------------------------


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


class Emitter:
    """Streams records as CSV (header row first) or JSON lines."""

    def __init__(self, fmt: str, config: dict, stream=None):
        self.fmt = fmt
        self.stream = stream or sys.stdout
        self.columns = None
        if fmt == "csv":
            for key, value in config.items():
                self.stream.write(f"# {key}={format_value(value)}\n")
        else:
            self.stream.write(json.dumps({"config": config}) + "\n")

    def emit(self, row: dict) -> None:
        if self.fmt == "jsonl":
            self.stream.write(json.dumps(row) + "\n")
        else:
            if self.columns is None:
                self.columns = list(row)
                self.stream.write(",".join(self.columns) + "\n")
            self.stream.write(",".join(format_value(row.get(c, "")) for c in self.columns) + "\n")
        self.stream.flush()


# -- grids --------------------------------------------------------------------------


def grid(lo: float, hi: float, n: int, scale: str) -> list[float]:
    if n < 0:
        raise InvalidArgument("grid size must be >= 0")
    if scale == "log":
        if not (lo > 0 and hi > 0):
            raise InvalidArgument("log grid needs positive bounds")
        return [float(x) for x in np.geomspace(lo, hi, n)]
    return [float(x) for x in np.linspace(lo, hi, n)]


def mu_values(args) -> list[float]:
    """mu from --mu, --lambda2, --mu-grid or --lambda2-grid."""
    if args.lambda2_grid is not None:
        return [lambda2_to_mu(x) for x in grid(args.lambda2_min, args.lambda2_max, args.lambda2_grid, args.scale)]
    if args.mu_grid is not None:
        return grid(args.mu_min, args.mu_max, args.mu_grid, args.scale)
    if args.lambda2 is not None:
        return [lambda2_to_mu(args.lambda2)]
    return [args.mu]


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv", help="output format (default csv)")
    p.add_argument(
        "--precision",
        default="auto",
        help="auto (default), double, or a number of mantissa bits",
    )


def _add_mu(p: argparse.ArgumentParser, mu=0.01, mu_min=1e-4, mu_max=0.1, scale="log") -> None:
    g = p.add_argument_group("pair generation")
    g.add_argument("--mu", type=float, default=mu, help=f"mean photon number per mode (default {mu})")
    g.add_argument("--lambda2", type=float, help="pair probability lambda^2 instead of --mu")
    g.add_argument("--mu-grid", type=int, metavar="N", help="sweep N values of mu")
    g.add_argument("--mu-min", type=float, default=mu_min)
    g.add_argument("--mu-max", type=float, default=mu_max)
    g.add_argument("--lambda2-grid", type=int, metavar="N", help="sweep N values of lambda^2")
    g.add_argument("--lambda2-min", type=float, default=0.001)
    g.add_argument("--lambda2-max", type=float, default=0.1)
    g.add_argument("--scale", choices=("linear", "log"), default=scale, help=f"grid spacing (default {scale})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdcsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a circuit file")
    p.add_argument("file", help="circuit file, or the name of a shipped circuit (hom, epr, ces)")
    p.add_argument("--set", action="append", default=[], metavar="NAME=VALUE", help="override a param")
    _add_output(p)

    p = sub.add_parser("hom", help="Hong-Ou-Mandel visibility")
    _add_mu(p)
    p.add_argument("--ideal", action="store_true", help="lossless, matched, noiseless setup")
    p.add_argument("--ta", type=float, default=1.0, help="channel transmittance of arm A")
    p.add_argument("--tb", type=float, default=1.0, help="channel transmittance of arm B")
    p.add_argument("--eta-a", type=float, default=1.0, help="detector efficiency A")
    p.add_argument("--eta-b", type=float, default=1.0, help="detector efficiency B")
    p.add_argument("--xi", type=float, default=1.0, help="mode match factor")
    p.add_argument("--nu", type=float, default=0.0, help="dark count probability (both detectors)")
    p.add_argument("--sign", choices=("+", "-"), default="+")
    p.add_argument("--emit-circuit", action="store_true", help="print the equivalent circuit and exit")
    _add_output(p)

    p = sub.add_parser("epr", help="Sagnac-loop EPR visibility")
    _add_mu(p)
    p.add_argument("--th", type=float, default=1.0, help="PBS transmittance of H light")
    p.add_argument("--tv", type=float, default=0.0, help="PBS leakage of V light")
    p.add_argument("--eta", type=float, default=1.0, help="detector efficiency for H light")
    p.add_argument("--eta-v", type=float, help="detector efficiency for V light (default --eta)")
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--sign", choices=("+", "-"), default="+")
    p.add_argument("--emit-circuit", action="store_true")
    _add_output(p)

    p = sub.add_parser("ces", help="concatenated entanglement swapping visibility")
    _add_ces(p)
    p.add_argument("--emit-circuit", action="store_true")
    _add_output(p)

    p = sub.add_parser("verify", help="compare the engine with the Fock oracle")
    p.add_argument("target", help="circuit file or builtin name (hom, epr, ces)")
    p.add_argument("--nmax", type=int, default=4, help="photon cutoff per source mode (default 4)")
    p.add_argument("--set", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = sub.add_parser("bench", help="timed visibility sweep")
    bsub = p.add_subparsers(dest="experiment", required=True)
    b = bsub.add_parser("ces")
    _add_ces(b, points=True)
    _add_output(b)
    return parser


def _add_ces(p: argparse.ArgumentParser, points: bool = False) -> None:
    _add_mu(p, mu=1e-3, mu_min=1e-5, mu_max=0.2)
    p.add_argument("--mbm", type=int, default=1, help="number of Bell measurements")
    p.add_argument("--eta", type=float, default=0.04, help="per-arm transmittance (default 0.04)")
    p.add_argument("--nu", type=float, default=1e-5, help="dark count probability (default 1e-5)")
    p.add_argument("--distance", type=float, help="total link length in km; sets eta from --alpha, --eta-d")
    p.add_argument("--alpha", type=float, default=0.2, help="fiber attenuation dB/km (default 0.2)")
    p.add_argument("--eta-d", type=float, default=0.7, help="detector efficiency with --distance")
    p.add_argument("--sign", choices=("+", "-"), default="+")
    if points:
        p.add_argument("--points", type=int, default=100, help="number of mu points (log grid)")


# -- commands -----------------------------------------------------------------------


def _precision(text: str):
    if text in ("auto", "double"):
        return text
    try:
        bits = int(text)
    except ValueError:
        raise InvalidArgument(f"--precision must be auto, double or an integer, got {text!r}") from None
    if bits < 53:
        raise InvalidArgument("--precision bits must be >= 53")
    return bits


def _overrides(items) -> dict:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise InvalidArgument(f"--set expects NAME=VALUE, got {item!r}")
        try:
            out[name] = float(value)
        except ValueError:
            raise InvalidArgument(f"--set {name}: not a number: {value!r}") from None
    return out


def _read_program(path: str):
    p = Path(path)
    if not p.exists() and (CIRCUIT_DIR / f"{path}.circuit").exists():
        p = CIRCUIT_DIR / f"{path}.circuit"
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidArgument(f"cannot read {path}: {exc}") from None
    try:
        return parse(text), str(p)
    except InvalidArgument as exc:
        raise InvalidArgument(f"{p}: {exc}") from None


def cmd_run(args, out) -> None:
    program, path = _read_program(args.file)
    overrides = _overrides(args.set)
    config = {"command": "run", "file": path, "precision": args.precision}
    config.update(program.defaults())
    config.update(overrides)
    for s in program.sweeps:
        if s.name not in overrides:
            config[f"sweep.{s.name}"] = f"{s.start!r}:{s.stop!r}:{s.count}:{s.scale}"
    em = Emitter(args.format, config, out)
    for result in runner.run(program, overrides, _precision(args.precision)):
        em.emit(result.record())


def hom_configs(args) -> list[HomConfig]:
    if args.ideal:
        return [HomConfig(mu) for mu in mu_values(args)]
    return [
        HomConfig(mu, args.ta, args.tb, args.eta_a, args.eta_b, args.xi, args.nu, args.nu, args.sign)
        for mu in mu_values(args)
    ]


def epr_configs(args) -> list[EprConfig]:
    return [
        EprConfig.from_pbs(mu, args.th, args.tv, args.eta, args.eta_v, nu=args.nu, sign=args.sign)
        for mu in mu_values(args)
    ]


def ces_configs(args) -> list[CesConfig]:
    eta = args.eta
    if args.distance is not None:
        eta = per_arm_transmittance(args.distance, args.alpha, args.eta_d, args.mbm)
    mus = grid(args.mu_min, args.mu_max, args.points, "log") if getattr(args, "points", None) is not None else mu_values(args)
    return [CesConfig(args.mbm, mu, eta, args.nu, sign=args.sign) for mu in mus]


def _timed(func, config, precision):
    t0 = time.perf_counter()
    value = func(config, precision)
    return value, time.perf_counter() - t0


def _hom_point(item):
    config, precision = item
    return _timed(hom_visibility, config, precision)


def _epr_point(item):
    config, precision = item
    return _timed(epr_visibility, config, precision)


def _ces_point(item):
    config, precision = item
    return _timed(ces_visibility, config, precision)


BUILTINS = {
    "hom": (hom_configs, _hom_point, runner.hom_program, lambda c: 4),
    "epr": (epr_configs, _epr_point, runner.epr_program, lambda c: 4),
    "ces": (ces_configs, _ces_point, runner.ces_program, lambda c: 2 ** c.n_detectors),
}


def cmd_builtin(args, out, name: str | None = None) -> None:
    name = name or args.command
    make_configs, point, program, terms = BUILTINS[name]
    configs = make_configs(args)
    if getattr(args, "emit_circuit", False):
        if len(configs) != 1:
            raise InvalidArgument("--emit-circuit takes a single parameter point")
        out.write(program(configs[0]))
        return
    precision = _precision(args.precision)
    header = {"command": name, "precision": precision, "points": len(configs)}
    if configs:
        header.update({k: v for k, v in asdict(configs[0]).items() if k != "mu"})
    em = Emitter(args.format, header, out)
    for config, (value, wall) in zip(configs, runner.map_points(point, [(c, precision) for c in configs])):
        em.emit(
            {
                "mu": config.mu,
                "lambda2": mu_to_lambda2(config.mu),
                "visibility": value,
                "n_terms": terms(config),
                "wall_time": wall,
            }
        )


def cmd_verify(args, out) -> None:
    if args.target in BUILTINS and not Path(args.target).exists():
        ns = build_parser().parse_args([args.target, "--lambda2", "0.05"])
        make_configs, _, program, _ = BUILTINS[args.target]
        if args.target == "hom":
            config = replace(make_configs(ns)[0], t_a=0.9, t_b=0.8, eta_a=0.5, eta_b=0.5, xi=0.95)
        elif args.target == "epr":
            ns.eta, ns.tv = 0.5, 1.0
            config = make_configs(ns)[0]
        else:
            ns.eta, ns.nu = 0.5, 0.0
            config = make_configs(ns)[0]
        prog, path = parse(program(config)), f"builtin:{args.target}"
    else:
        prog, path = _read_program(args.target)
    overrides = _overrides(args.set)
    header = {"command": "verify", "target": path, "nmax": args.nmax}
    header.update(prog.defaults())
    header.update(overrides)
    em = Emitter(args.format, header, out)
    failures = 0
    for res in runner.verify(prog, args.nmax, overrides):
        em.emit(res.record())
        failures += not res.within_bound
    if failures:
        print(f"verify: {failures} point(s) outside the truncation bound", file=sys.stderr)


def cmd_bench(args, out) -> None:
    t0 = time.perf_counter()
    cmd_builtin(args, out, name="ces")
    wall = time.perf_counter() - t0
    print(
        f"bench ces m_bm={args.mbm} points={args.points} wall_time={wall:.2f}s "
        f"terms_per_eval={2 ** (2 * args.mbm + 2)}",
        file=sys.stderr,
    )


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cmd_run(args, out)
        elif args.command in BUILTINS:
            cmd_builtin(args, out)
        elif args.command == "verify":
            cmd_verify(args, out)
        elif args.command == "bench":
            cmd_bench(args, out)
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        sys.stderr.close()
        return EXIT_OK
    except UndefinedVisibility as exc:
        print(f"error: undefined visibility: {exc}", file=sys.stderr)
        return EXIT_VISIBILITY
    except NumericalDegeneracy as exc:
        print(f"error: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

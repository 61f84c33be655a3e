"""Execution of circuit programs: Gaussian engine, Fock oracle and builtins."""
from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .clicks import DetectorSpec, Outcome, deterministic_mode, evaluate_pattern
from .dsl import CircuitProgram, parse
from .errors import InvalidArgument, NumericalDegeneracy, UndefinedVisibility
from .experiments import (
    CesConfig,
    EprConfig,
    HomConfig,
    ces_detector_modes,
    ces_detectors,
    lambda2_to_mu,
    sagnac_source,
    visibility,
)
from .gaussian import (
    MismatchSpec,
    apply_loss,
    apply_symplectic,
    beam_splitter,
    expand_mode_mismatch,
    make_coherent,
    make_thermal,
    make_tmsv,
    make_vacuum,
    mode_swap,
    parallel,
    phase_shift,
    polarizer,
    tensor,
)

FOCK_MAX_ELEMENTS = 30_000_000


@dataclass(frozen=True)
class RunResult:
    params: dict
    quantity: str  # "probability" or "visibility"
    value: float
    n_terms: int  # inclusion-exclusion terms per evaluated pattern
    wall_time: float
    precision_bits: int = 53
    extra: dict = field(default_factory=dict)

    def record(self) -> dict:
        row = dict(self.params)
        row[self.quantity] = self.value
        row.update(self.extra)
        row["n_terms"] = self.n_terms
        row["precision_bits"] = self.precision_bits
        row["wall_time"] = self.wall_time
        return row


# -- parameter binding --------------------------------------------------------------


def sweep_points(program: CircuitProgram, overrides: dict | None = None) -> list[dict]:
    """Bindings for every sweep point in declaration order (first sweep slowest)."""
    base = program.defaults()
    for name, value in (overrides or {}).items():
        if name not in base:
            raise InvalidArgument(f"--set refers to undeclared parameter {name!r}")
        base[name] = float(value)
    swept = [s for s in program.sweeps if s.name not in (overrides or {})]
    if not swept:
        return [base]
    points = []
    for combo in itertools.product(*[s.values() for s in swept]):
        b = dict(base)
        b.update({s.name: v for s, v in zip(swept, combo)})
        points.append(b)
    return points


def _resolve(value, bindings: dict) -> float:
    return float(bindings[value]) if isinstance(value, str) else float(value)


def _source_mu(source, bindings) -> float:
    if source.get("lambda2") is not None:
        return lambda2_to_mu(_resolve(source.get("lambda2"), bindings))
    return _resolve(source.get("mu"), bindings)


def _mismatch_pairs(program: CircuitProgram) -> set[frozenset]:
    return {frozenset(op.modes) for op in program.ops if op.kind == "mismatch"}


def _bs_pairs(op, pairs: set[frozenset]) -> list[tuple[str, str]]:
    a, b = op.modes
    if op.kind == "bs" and frozenset((a, b)) in pairs:
        return [(a, b), (f"{a}.2", f"{b}.2"), (f"{a}.3", f"{b}.3")]
    return [(a, b)]


# -- Gaussian execution ---------------------------------------------------------------


def build_gaussian(program: CircuitProgram, bindings: dict):
    """State right before detection, detectors and the pattern dict."""
    parts = []
    for s in program.sources:
        if s.kind == "vacuum":
            parts.append(make_vacuum(len(s.modes), s.modes))
        elif s.kind == "coherent":
            parts.append(make_coherent(_resolve(s.get("re"), bindings), _resolve(s.get("im", 0.0), bindings), s.modes[0]))
        elif s.kind == "thermal":
            parts.append(make_thermal(_resolve(s.get("mu"), bindings), s.modes[0]))
        elif s.kind == "tmsv":
            parts.append(make_tmsv(_source_mu(s, bindings), s.get("sign", "+"), s.modes))
        elif s.kind == "sagnac":
            parts.append(sagnac_source(_source_mu(s, bindings), s.get("sign", "+"), s.modes))
    state = tensor(*parts)
    pairs = _mismatch_pairs(program)
    for op in program.ops:
        v = None if op.value is None else _resolve(op.value, bindings)
        if op.kind == "bs":
            state = apply_symplectic(state, parallel(*(beam_splitter(v, x, y) for x, y in _bs_pairs(op, pairs))))
        elif op.kind == "polarizer":
            state = apply_symplectic(state, polarizer(v, *op.modes))
        elif op.kind == "phase":
            state = apply_symplectic(state, phase_shift(v, op.modes[0]))
        elif op.kind == "loss":
            state = apply_loss(state, v, op.modes)
        elif op.kind == "mismatch":
            state = expand_mode_mismatch(state, MismatchSpec(v, op.modes))
        elif op.kind == "swap":
            state = apply_symplectic(state, mode_swap(*op.modes))
    detectors = [
        DetectorSpec(d.id, d.modes, _resolve(d.eta, bindings), _resolve(d.nu, bindings))
        for d in program.detectors
    ]
    pattern = {det_id: Outcome.coerce(o) for det_id, o in program.pattern}
    return state, detectors, pattern


def _evaluate(program, bindings, precision):
    state, detectors, pattern = build_gaussian(program, bindings)
    return evaluate_pattern(state, detectors, pattern, precision)


def _point_label(bindings: dict, program: CircuitProgram) -> str:
    names = [s.name for s in program.sweeps] or list(bindings)
    return ", ".join(f"{n}={bindings[n]!r}" for n in names if n in bindings)


def run_point(program: CircuitProgram, bindings: dict, precision="auto") -> RunResult:
    """Evaluate one sweep point; engine errors name the point."""
    t0 = time.perf_counter()
    try:
        vis = program.visibility
        if vis is None:
            ev = _evaluate(program, bindings, precision)
            value, quantity, bits = ev.probability, "probability", ev.precision_bits
            n_terms = ev.n_terms
        else:
            hi = dict(bindings, **{vis.param: _resolve(vis.high, bindings)})
            lo = dict(bindings, **{vis.param: _resolve(vis.low, bindings)})
            ev_hi = _evaluate(program, hi, precision)
            ev_lo = _evaluate(program, lo, precision)
            norm = "high" if vis.kind == "ratio" else "sum"
            value = visibility(ev_hi.probability, ev_lo.probability, normalize=norm)
            quantity, bits = "visibility", max(ev_hi.precision_bits, ev_lo.precision_bits)
            n_terms = ev_hi.n_terms
    except (InvalidArgument, NumericalDegeneracy, UndefinedVisibility) as exc:
        raise type(exc)(f"at {_point_label(bindings, program)}: {exc}") from exc
    return RunResult(dict(bindings), quantity, value, n_terms, time.perf_counter() - t0, bits)


def _run_point_star(args):
    return run_point(*args)


def worker_count() -> int:
    """Worker processes from THREADS (default 1); DETERMINISTIC=1 keeps it serial."""
    if deterministic_mode():
        return 1
    try:
        return max(1, int(os.environ.get("THREADS", "1")))
    except ValueError:
        raise InvalidArgument(f"THREADS must be an integer, got {os.environ['THREADS']!r}") from None


def map_points(func, items, workers: int | None = None):
    """Ordered map, in a process pool when more than one worker is requested."""
    workers = worker_count() if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        yield from map(func, items)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(func, items)


def run(program: CircuitProgram | str, overrides: dict | None = None, precision="auto", workers=None):
    """Stream RunResults, one per sweep point, in declaration order."""
    if isinstance(program, str):
        program = parse(program)
    points = sweep_points(program, overrides)
    return map_points(_run_point_star, [(program, b, precision) for b in points], workers)


# -- Fock oracle execution ------------------------------------------------------------


def _fock_coherent(re: float, im: float, n_max: int, label: str) -> fock.FockVector:
    alpha = complex(re, im)
    n = np.arange(n_max + 1)
    fact = np.array([math.factorial(int(k)) for k in n], dtype=float)
    amp = math.exp(-abs(alpha) ** 2 / 2) * alpha**n / np.sqrt(fact)
    return fock.FockVector(amp.astype(complex), (label,))


def _fock_phase(state: fock.FockVector, phi: float, mode: str) -> fock.FockVector:
    ax = state.axis(mode)
    shape = [1] * state.n_modes
    shape[ax] = -1
    n = np.arange(state.dims[ax])
    amp = state.amplitudes * np.exp(1j * phi * n).reshape(shape)
    return fock.FockVector(amp, state.labels, state.environment)


def _touched(op, pairs) -> set[str]:
    if op.kind == "bs":
        return {m for pr in _bs_pairs(op, pairs) for m in pr}
    if op.kind == "mismatch":
        a, b = op.modes
        return {a, b, f"{a}.2", f"{b}.2", f"{a}.3", f"{b}.3"}
    return set(op.modes)


def build_fock(program: CircuitProgram, bindings: dict, n_max: int):
    """Truncated photon-number state, per-mode terminal transmittances, truncation bound.

    Loss that acts on a mode after its last interaction is applied as a
    detection weight; earlier loss is dilated into an environment mode.
    """
    parts, bound = [], 0.0
    for s in program.sources:
        if s.kind == "vacuum":
            parts.append(fock.fock_vacuum(s.modes))
        elif s.kind == "coherent":
            re, im = _resolve(s.get("re"), bindings), _resolve(s.get("im", 0.0), bindings)
            parts.append(_fock_coherent(re, im, n_max, s.modes[0]))
            r = abs(complex(re, im)) ** 2
            kept = math.fsum(math.exp(-r) * r**k / math.factorial(k) for k in range(n_max + 1))
            bound += max(0.0, 1.0 - kept)
        else:
            mu = _resolve(s.get("mu"), bindings) if s.kind == "thermal" else _source_mu(s, bindings)
            if not mu >= 0:
                raise InvalidArgument(f"mean photon number must be >= 0, got {mu}")
            lam = math.sqrt(mu / (1.0 + mu))
            sign = s.get("sign", "+")
            if s.kind == "thermal":
                env = f"{s.modes[0]}.env"
                v = fock.fock_tmsv(lam, n_max, (s.modes[0], env))
                parts.append(fock.FockVector(v.amplitudes, v.labels, frozenset({env})))
                bound += lam ** (2 * (n_max + 1))
            elif s.kind == "tmsv":
                parts.append(fock.fock_tmsv(lam, n_max, s.modes, sign))
                bound += lam ** (2 * (n_max + 1))
            else:
                parts.append(fock.fock_sagnac(mu, n_max, s.modes, sign))
                bound += 2 * lam ** (2 * (n_max + 1))
    state = fock.fock_tensor(*parts)
    pairs = _mismatch_pairs(program)
    terminal: dict[str, float] = {}
    ops = list(program.ops)
    for k, op in enumerate(ops):
        v = None if op.value is None else _resolve(op.value, bindings)
        if op.kind == "bs":
            for x, y in _bs_pairs(op, pairs):
                state = fock.fock_beam_splitter(state, v, x, y)
        elif op.kind == "polarizer":
            state = fock.fock_polarizer(state, v, *op.modes)
        elif op.kind == "phase":
            state = _fock_phase(state, v, op.modes[0])
        elif op.kind == "loss":
            if not 0.0 <= v <= 1.0:
                raise InvalidArgument(f"transmittance must be in [0, 1], got {v}")
            later = set().union(*[_touched(o, pairs) for o in ops[k + 1 :] if o.kind != "loss"])
            for m in op.modes:
                if m in later:
                    state = fock.fock_loss(state, v, m, purify=True)
                else:
                    terminal[m] = terminal.get(m, 1.0) * v
        elif op.kind == "mismatch":
            if not 0.0 <= v <= 1.0:
                raise InvalidArgument(f"mode match factor must be in [0, 1], got {v}")
            state = fock.fock_mode_mismatch(state, v, *op.modes)
        elif op.kind == "swap":
            state = fock.fock_swap(state, *op.modes)
        if state.amplitudes.size > FOCK_MAX_ELEMENTS:
            raise InvalidArgument(
                f"oracle state has {state.amplitudes.size} amplitudes after line {op.loc[0]}; lower --nmax"
            )
    return state, terminal, bound * max(len(program.detectors), 1) + fock.ROUNDING_SLACK


@dataclass(frozen=True)
class VerifyResult:
    params: dict
    quantity: str
    engine: float
    oracle: float
    bound: float
    n_max: int
    wall_time: float

    @property
    def difference(self) -> float:
        return abs(self.engine - self.oracle)

    @property
    def within_bound(self) -> bool:
        return self.difference <= self.bound

    def record(self) -> dict:
        row = dict(self.params)
        row.update(
            quantity=self.quantity,
            engine=self.engine,
            oracle=self.oracle,
            difference=self.difference,
            bound=self.bound,
            within_bound=self.within_bound,
            n_max=self.n_max,
            wall_time=self.wall_time,
        )
        return row


def _fock_probability(program, bindings, n_max):
    state, terminal, bound = build_fock(program, bindings, n_max)
    detectors = [
        DetectorSpec(d.id, d.modes, _resolve(d.eta, bindings), _resolve(d.nu, bindings))
        for d in program.detectors
    ]
    pattern = dict(program.pattern)
    return fock.fock_pattern_probability(state, detectors, pattern, terminal), bound


def verify_point(program: CircuitProgram, bindings: dict, n_max: int) -> VerifyResult:
    """Engine vs oracle for the pattern probability at one point.

    With a visibility clause both probabilities entering the visibility are
    compared and the larger discrepancy is reported on the ``high`` setting's
    row; the bound applies to each probability separately.
    """
    t0 = time.perf_counter()
    vis = program.visibility
    settings = [bindings]
    if vis is not None:
        settings = [
            dict(bindings, **{vis.param: _resolve(vis.high, bindings)}),
            dict(bindings, **{vis.param: _resolve(vis.low, bindings)}),
        ]
    worst = None
    for b in settings:
        engine = _evaluate(program, b, "auto").probability
        oracle, bound = _fock_probability(program, b, n_max)
        if worst is None or abs(engine - oracle) > abs(worst[0] - worst[1]):
            worst = (engine, oracle, bound, b)
    engine, oracle, bound, b = worst
    return VerifyResult(dict(b), "probability", engine, oracle, bound, n_max, time.perf_counter() - t0)


def _verify_star(args):
    return verify_point(*args)


def verify(program: CircuitProgram | str, n_max: int = 4, overrides=None, workers=None):
    if isinstance(program, str):
        program = parse(program)
    if n_max < 0:
        raise InvalidArgument("n_max must be >= 0")
    points = sweep_points(program, overrides)
    return map_points(_verify_star, [(program, b, n_max) for b in points], workers)


# -- builtin experiments as programs --------------------------------------------------


def _r(x: float) -> str:
    return repr(float(x))


def hom_program(config: HomConfig) -> str:
    """HOM circuit with the delay modelled as mode match 0 (ratio visibility)."""
    return "\n".join(
        [
            f"param mu={_r(config.mu)}",
            f"param xi={_r(config.xi)}",
            f"source tmsv mu=mu sign={config.sign} modes=A,B",
            f"loss t={_r(config.t_a)} A",
            f"loss t={_r(config.t_b)} B",
            "mismatch xi=xi A B",
            "bs t=0.5 A B",
            f"detector A eta={_r(config.eta_a)} nu={_r(config.nu_a)} modes=A,A.2,A.3",
            f"detector B eta={_r(config.eta_b)} nu={_r(config.nu_b)} modes=B,B.2,B.3",
            "pattern A=click B=click",
            f"visibility ratio xi 0.0 {_r(config.xi)}",
            "",
        ]
    )


def epr_program(config: EprConfig) -> str:
    return "\n".join(
        [
            f"param mu={_r(config.mu)}",
            f"param theta_b={_r(config.theta_b)}",
            f"source sagnac mu=mu sign={config.sign} modes=AH,AV,BH,BV",
            f"polarizer theta={_r(config.theta_a)} AH AV",
            "polarizer theta=theta_b BH BV",
            f"loss t={_r(config.eta_ah)} AH",
            f"loss t={_r(config.eta_av)} AV",
            f"loss t={_r(config.eta_bh)} BH",
            f"loss t={_r(config.eta_bv)} BV",
            f"detector A eta=1.0 nu={_r(config.nu)} modes=AH,AV",
            f"detector B eta=1.0 nu={_r(config.nu)} modes=BH,BV",
            "pattern A=click B=click",
            f"visibility contrast theta_b {_r(math.pi / 2)} 0.0",
            "",
        ]
    )


def ces_program(config: CesConfig) -> str:
    """Concatenated swapping with any number of Bell measurements."""
    m = config.m_bm
    lines = [f"param mu={_r(config.mu)}", f"param theta_b={_r(config.theta_b)}"]
    for k in range(m + 1):
        labels = ",".join(str(4 * k + j) for j in range(1, 5))
        lines.append(f"source sagnac mu=mu sign={config.sign} modes={labels}")
    for x in range(1, m + 1):
        lines.append(f"bs t=0.5 {4 * x + 1} {4 * x - 1}")
        lines.append(f"bs t=0.5 {4 * x + 2} {4 * x}")
    lines.append(f"polarizer theta={_r(config.theta_a)} 2 1")
    lines.append(f"polarizer theta=theta_b {4 * m + 4} {4 * m + 3}")
    lines.append(f"loss t={_r(config.eta)} " + " ".join(str(k) for k in range(1, 4 * m + 5)))
    for det, mode in zip(ces_detectors(config), ces_detector_modes(m)):
        lines.append(f"detector {det.id} eta=1.0 nu={_r(config.nu)} modes={mode}")
    lines.append("pattern " + " ".join(f"{d.id}=click" for d in ces_detectors(config)))
    lines.append(f"visibility contrast theta_b {_r(math.pi / 2)} 0.0")
    return "\n".join(lines) + "\n"

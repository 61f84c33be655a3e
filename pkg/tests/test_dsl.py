import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzing import fuzz
from spdcsim.dsl import ParseError, format_program, parse
from spdcsim.errors import InvalidArgument
from spdcsim.experiments import CesConfig, EprConfig, HomConfig, ces_visibility, epr_visibility, hom_visibility
from spdcsim.runner import (
    ces_program,
    epr_program,
    hom_program,
    run,
    sweep_points,
    verify,
)

CIRCUITS = Path(__file__).resolve().parents[1] / "src" / "spdcsim" / "circuits"
MINIMAL = "source tmsv mu=0.1 sign=+ modes=a,b\ndetector D1 eta=1 nu=0 modes=a\npattern D1=click"


def shipped():
    return {p.stem: p.read_text() for p in sorted(CIRCUITS.glob("*.circuit"))}


def test_minimal_program():
    prog = parse(MINIMAL)
    assert len(prog.sources) == 1 and len(prog.detectors) == 1
    assert prog.sources[0].get("mu") == 0.1
    assert prog.pattern == (("D1", "click"),)
    (result,) = list(run(prog))
    assert result.quantity == "probability"
    assert result.value == pytest.approx(0.1 / 1.1)
    assert result.n_terms == 2


@pytest.mark.parametrize(
    "text,line,column,fragment",
    [
        ("source tmsv mu=0.1 sign=+", 1, 26, "missing modes"),
        ("source tmsv mu=0.1 modes=a,b\nfrobnicate a", 2, 1, "unknown keyword"),
        ("source tmsv mu=0.1 modes=a,b\nbs t=0.5 a c", 2, 1, "undeclared mode 'c'"),
        (MINIMAL.replace("pattern", "detector D1 eta=1 nu=0 modes=b\npattern"), 3, 1, "duplicate detector"),
        ("source tmsv mu=0.1 modes=a,b\nsource vacuum modes=b", 2, 1, "already declared"),
        ("source tmsv mu=x modes=a,b", 1, 1, "undeclared parameter 'x'"),
        ("param mu=0.1\nsweep nu 0 1 3", 2, 1, "undeclared parameter"),
        ("source tmsv mu=0.1 modes=a,b\ndetector D eta=1 modes=a\ndetector E modes=a,b\npattern D=click", 3, 1,
         "already measured"),
        ("source tmsv mu=0.1 sign=* modes=a,b", 1, 20, "sign must be"),
        ("source tmsv mu=1e999 modes=a,b", 1, 13, "non-finite"),
        ("   source   thermal mu=0.1 modes=a\n  pattern Q=click", 2, 11, "unknown detector"),
        ("source coherent re=1 modes=a\nloss t=0.5", 2, 11, "at least one mode"),
        ("source tmsv lambda2=0.1 mu=0.1 modes=a,b", 1, 41, "exactly one of"),
        ("", 1, 1, "no source"),
    ],
)
def test_diagnostics_carry_location(text, line, column, fragment):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert (info.value.line, info.value.column) == (line, column)
    assert fragment in info.value.message
    assert str(info.value).startswith(f"line {line}:{column}:")


def test_comments_and_blank_lines_are_ignored():
    prog = parse("# header\n\n" + MINIMAL.replace("modes=a\n", "modes=a   # bucket\n"))
    assert prog == parse(MINIMAL)


@pytest.mark.parametrize("name", ["hom", "epr", "ces"])
def test_shipped_circuits_round_trip(name):
    prog = parse(shipped()[name])
    text = format_program(prog)
    assert parse(text) == prog
    assert format_program(parse(text)) == text


@pytest.mark.parametrize(
    "program",
    [
        hom_program(HomConfig(0.02, 0.4, 0.3, 0.6, 0.7, 0.98, 1e-6, 2e-6)),
        epr_program(EprConfig.from_pbs(0.03, 1.0, 0.009, 0.1, nu=1e-6)),
        ces_program(CesConfig(3, 1e-3, 0.04, 1e-5)),
    ],
)
def test_generated_programs_round_trip(program):
    prog = parse(program)
    assert parse(format_program(prog)) == prog


def test_hom_circuit_reproduces_library_curve():
    prog = parse(shipped()["hom"])
    results = list(run(prog))
    assert len(results) == 50
    for r in results:
        lam2 = r.params["lambda2"]
        cfg = HomConfig(lam2 / (1 - lam2), 0.42, 0.29, 0.68, 0.70, 0.9878)
        assert r.quantity == "visibility"
        assert r.value == pytest.approx(hom_visibility(cfg), rel=1e-12)
    values = [r.value for r in results]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_builtin_programs_equal_library_calls():
    hom = HomConfig(0.05, 0.42, 0.29, 0.68, 0.70, 0.9878)
    assert next(run(hom_program(hom))).value == hom_visibility(hom)
    epr = EprConfig.from_pbs(0.02, 1.0, 0.009, 0.1)
    assert next(run(epr_program(epr))).value == epr_visibility(epr)
    ces = CesConfig(2, 1e-3, 0.04, 1e-5)
    assert next(run(ces_program(ces))).value == ces_visibility(ces)


def test_ces_program_for_any_m():
    for m in (1, 4):
        prog = parse(ces_program(CesConfig(m, 1e-3, 0.04, 1e-5)))
        assert len(prog.detectors) == 2 * m + 2
        assert len(prog.mode_labels()) == 4 * m + 4


def test_sweep_grid_order_and_empty_sweep():
    prog = parse("param a=1\nparam b=2\nsweep a 1 2 2\nsweep b 0.1 10 3 log\n" + MINIMAL.replace("mu=0.1", "mu=b"))
    points = sweep_points(prog)
    assert [(p["a"], p["b"]) for p in points] == [
        (1.0, 0.1), (1.0, pytest.approx(1.0)), (1.0, 10.0), (2.0, 0.1), (2.0, pytest.approx(1.0)), (2.0, 10.0)
    ]
    empty = parse("param a=1\nsweep a 0 1 0\n" + MINIMAL)
    assert list(run(empty)) == []


def test_overrides_replace_sweeps():
    prog = parse("param m=0.1\nsweep m 0.1 1 5\n" + MINIMAL.replace("mu=0.1", "mu=m"))
    (r,) = list(run(prog, overrides={"m": 0.3}))
    assert r.value == pytest.approx(0.3 / 1.3)
    with pytest.raises(InvalidArgument):
        list(run(prog, overrides={"zz": 1.0}))


def test_engine_errors_name_the_sweep_point():
    prog = parse("param t=0.5\nsweep t 0.5 1.5 3\nsource tmsv mu=0.1 modes=a,b\nbs t=t a b\n"
                 "detector D eta=1 nu=0 modes=a\npattern D=click")
    with pytest.raises(InvalidArgument, match=r"at t=1\.5"):
        list(run(prog))


def test_parallel_run_keeps_declaration_order():
    prog = parse(shipped()["epr"])
    serial = [r.value for r in run(prog, workers=1)]
    parallel = [r.value for r in run(prog, workers=2)]
    assert parallel == serial


def test_verify_reports_differences_within_bound():
    text = (
        "param lambda2=0.05\nsweep lambda2 0.01 0.05 3\n"
        "source coherent re=0.3 im=0.2 modes=c\nsource tmsv lambda2=lambda2 modes=a,b\n"
        "source thermal mu=0.05 modes=d\n"
        "phase phi=0.7 c\nbs t=0.4 a c\nloss t=0.8 a\nbs t=0.5 c d\nswap b d\nloss t=0.6 b\n"
        "detector A eta=0.9 nu=1e-3 modes=a\ndetector B eta=0.7 nu=0 modes=b,d\ndetector C eta=1 nu=0 modes=c\n"
        "pattern A=click B=click C=noclick\n"
    )
    results = list(verify(text, n_max=5))
    assert len(results) == 3
    for r in results:
        assert r.within_bound, r
        assert r.difference < 1e-4


def test_visibility_clause_validation():
    with pytest.raises(ParseError, match="also swept"):
        parse("param x=0\nsweep x 0 1 2\n" + MINIMAL + "\nvisibility ratio x 0 1")
    with pytest.raises(ParseError, match="ratio or contrast"):
        parse("param x=0\n" + MINIMAL + "\nvisibility blend x 0 1")


def test_fuzzed_inputs_never_crash():
    accepted, rejected, crashes = fuzz(list(shipped().values()) + [MINIMAL], 5000, seed=7)
    assert not crashes, crashes[:3]
    assert accepted > 0 and rejected > 0


@given(st.text(max_size=200))
def test_arbitrary_text_never_crashes(text):
    try:
        parse(text)
    except ParseError as exc:
        assert exc.line >= 1 and exc.column >= 1


@given(
    mu=st.floats(0, 10),
    t=st.floats(0, 1),
    eta=st.floats(0, 1),
    nu=st.floats(0, 0.5),
    outcome=st.sampled_from(["click", "noclick", "marginal"]),
)
def test_printer_round_trips_generated_programs(mu, t, eta, nu, outcome):
    text = (
        f"param m={mu!r}\nsource tmsv mu=m sign=- modes=x,y\nsource vacuum modes=z\n"
        f"bs t={t!r} x z\nloss t={t!r} y z\nmismatch xi={t!r} x y\n"
        f"detector D eta={eta!r} nu={nu!r} modes=x,x.2,x.3\ndetector E modes=y\npattern D={outcome} E=click\n"
    )
    prog = parse(text)
    assert parse(format_program(prog)) == prog
    assert math.isfinite(next(run(prog)).value)

import csv
import io
import json
import math
import subprocess
import sys

import pytest

from spdcsim import cli
from spdcsim.dsl import parse
from spdcsim.errors import NumericalDegeneracy
from spdcsim.experiments import (
    CesConfig,
    EprConfig,
    HomConfig,
    ces_visibility,
    epr_visibility,
    hom_visibility,
    lambda2_to_mu,
)
from spdcsim.runner import run


def invoke(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out=out)
    return code, out.getvalue()


def csv_rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def header(text):
    return dict(ln[2:].split("=", 1) for ln in text.splitlines() if ln.startswith("# "))


def jsonl_rows(text):
    lines = text.splitlines()
    return json.loads(lines[0])["config"], [json.loads(ln) for ln in lines[1:]]


def test_run_shipped_circuit_csv_and_jsonl_agree():
    code, text = invoke("run", "epr")
    assert code == 0
    rows = csv_rows(text)
    code, js = invoke("run", "epr", "--format", "jsonl")
    assert code == 0
    config, records = jsonl_rows(js)
    assert config["mu"] == 0.01
    assert len(rows) == len(records) == 40
    for row, rec in zip(rows, records):
        assert float(row["visibility"]) == rec["visibility"]
        assert float(row["mu"]) == rec["mu"]
        assert int(row["n_terms"]) == rec["n_terms"] == 4


def test_csv_header_echoes_parameters():
    code, text = invoke("run", "hom", "--set", "lambda2=0.05")
    assert code == 0
    h = header(text)
    assert h["lambda2"] == "0.050000000000000003"
    assert h["xi"] == "0.98780000000000001"
    rows = csv_rows(text)
    assert len(rows) == 1 and float(rows[0]["lambda2"]) == 0.05


def test_builtins_equal_library_calls_bit_for_bit(monkeypatch):
    monkeypatch.setenv("DETERMINISTIC", "1")
    _, text = invoke("hom", "--lambda2-grid", "5", "--ta", "0.42", "--tb", "0.29", "--eta-a", "0.68",
                     "--eta-b", "0.70", "--xi", "0.9878", "--format", "jsonl")
    _, recs = jsonl_rows(text)
    for r in recs:
        assert r["visibility"] == hom_visibility(HomConfig(r["mu"], 0.42, 0.29, 0.68, 0.70, 0.9878))
    _, text = invoke("epr", "--mu-grid", "4", "--tv", "0.009", "--eta", "0.1", "--format", "jsonl")
    _, recs = jsonl_rows(text)
    for r in recs:
        assert r["visibility"] == epr_visibility(EprConfig.from_pbs(r["mu"], 1.0, 0.009, 0.1))
    _, text = invoke("ces", "--mbm", "2", "--mu-grid", "3", "--format", "jsonl")
    _, recs = jsonl_rows(text)
    for r in recs:
        assert r["visibility"] == ces_visibility(CesConfig(2, r["mu"], 0.04, 1e-5))
        assert r["n_terms"] == 2**6


def test_epr_leakage_flag_sets_v_efficiency():
    code, text = invoke("epr", "--tv", "0.009", "--eta", "0.1", "--lambda2", "0.02")
    assert code == 0
    h = header(text)
    assert float(h["eta_av"]) == pytest.approx(0.0009)
    assert float(h["eta_ah"]) == pytest.approx(0.1)
    (row,) = csv_rows(text)
    assert float(row["mu"]) == lambda2_to_mu(0.02)


def test_emitted_circuit_runs_to_the_same_value():
    code, text = invoke("ces", "--mbm", "2", "--mu", "0.002", "--emit-circuit")
    assert code == 0
    prog = parse(text)
    assert next(run(prog)).value == ces_visibility(CesConfig(2, 0.002, 0.04, 1e-5))


def test_ces_distance_flag():
    code, text = invoke("ces", "--mbm", "1", "--distance", "100", "--mu", "0.001")
    assert code == 0
    assert float(header(text)["eta"]) == pytest.approx(0.7 * 10 ** (-0.2 * 25 / 10))


def test_undefined_visibility_exit_code():
    code, _ = invoke("hom", "--ideal", "--mu", "0")
    assert code == cli.EXIT_VISIBILITY == 4


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.circuit"
    bad.write_text("source tmsv mu=0.1 modes=a,b\nbs t=0.5 a q\n")
    code, _ = invoke("run", str(bad))
    assert code == cli.EXIT_INVALID == 2
    assert "line 2:1" in capsys.readouterr().err


def test_validation_error_exit_code():
    assert invoke("ces", "--mbm", "0")[0] == 2
    assert invoke("hom", "--ta", "1.5")[0] == 2
    assert invoke("run", "/nonexistent/file.circuit")[0] == 2
    assert invoke("run", "hom", "--set", "nope=1")[0] == 2
    with pytest.raises(SystemExit) as info:
        invoke("ces", "--mbm", "two")
    assert info.value.code == 2


def test_numerical_degeneracy_exit_code(monkeypatch):
    def broken(*args, **kwargs):
        raise NumericalDegeneracy("cov + I is not positive definite")

    monkeypatch.setattr(cli.runner, "run", broken)
    assert invoke("run", "hom")[0] == cli.EXIT_DEGENERATE == 3


def test_empty_sweep_is_success(tmp_path):
    f = tmp_path / "empty.circuit"
    f.write_text("param mu=0.1\nsweep mu 0.1 1 0\nsource tmsv mu=mu modes=a,b\n"
                 "detector D eta=1 nu=0 modes=a\npattern D=click\n")
    code, text = invoke("run", str(f))
    assert code == 0 and csv_rows(text) == []


def test_threads_do_not_change_results(monkeypatch):
    monkeypatch.setenv("THREADS", "1")
    _, serial = invoke("ces", "--mbm", "1", "--mu-grid", "6", "--format", "jsonl")
    monkeypatch.setenv("THREADS", "3")
    _, parallel = invoke("ces", "--mbm", "1", "--mu-grid", "6", "--format", "jsonl")
    strip = lambda recs: [{k: v for k, v in r.items() if k != "wall_time"} for r in recs]
    assert strip(jsonl_rows(serial)[1]) == strip(jsonl_rows(parallel)[1])


def test_verify_builtins_within_bound():
    for target, nmax in (("hom", "4"), ("epr", "4"), ("ces", "3")):
        code, text = invoke("verify", target, "--nmax", nmax)
        assert code == 0
        (row,) = csv_rows(text)
        assert row["within_bound"] == "true"
        assert float(row["difference"]) <= float(row["bound"])


def test_bench_emits_one_record_per_point(capsys):
    code, text = invoke("bench", "ces", "--mbm", "1", "--points", "7")
    assert code == 0
    assert len(csv_rows(text)) == 7
    assert "bench ces m_bm=1 points=7" in capsys.readouterr().err


def test_csv_prints_seventeen_significant_digits():
    assert cli.format_value(0.1) == "0.10000000000000001"
    assert float(cli.format_value(math.pi)) == math.pi


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "spdcsim", "hom", "--mu", "0.05", "--format", "jsonl"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    _, recs = jsonl_rows(proc.stdout)
    assert recs[0]["visibility"] == hom_visibility(HomConfig(0.05))

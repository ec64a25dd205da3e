import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from chargedpolymer import cli
from chargedpolymer import stats_verify as sv
from chargedpolymer.report import ReportError, histogram_rows, report


def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_constants_json(capsys):
    assert run_cli("constants", "--walk", "simple", "--d", "3") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["gamma"] == pytest.approx(0.516386, abs=1e-6)
    cli.validate(out, "constants")


def test_exact_json(capsys):
    assert run_cli("exact", "--n", 4, "--m", 2, "--quantity", "Q") == 0
    out = json.loads(capsys.readouterr().out)
    assert (out["num"], out["den"]) == ("3", "2")


def test_exact_truncated_needs_K(capsys):
    assert run_cli("exact", "--n", 4, "--m", 2, "--quantity", "Htilde") == 2
    assert "needs --K" in capsys.readouterr().err
    assert run_cli("exact", "--n", 4, "--m", 2, "--quantity", "Htilde", "--K", "inf") == 0


def test_unknown_flag_exits_2():
    p = subprocess.run([sys.executable, "-m", "chargedpolymer.cli", "constants", "--bogus"],
                       capture_output=True, text=True)
    assert p.returncode == 2
    assert "usage" in p.stderr and p.stdout == ""


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"walk": {"kind": "simple", "d": 1}, "n_grid": [5, 3], "replicates": 1}))
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    cfg.write_text(json.dumps({"walk": {"kind": "simple", "d": 1}, "n_grid": [5], "replicates": 1,
                               "colour": "red"}))
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert run_cli("simulate", "--config", tmp_path / "missing.json") == 2


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    cfg = out / "cfg.json"
    cfg.write_text(json.dumps({"name": "small", "walk": {"kind": "simple", "d": 3},
                               "n_grid": [100, 1000], "replicates": 2000, "master_seed": 4,
                               "observables": ["H", "Q"]}))
    assert run_cli("simulate", "--config", cfg, "--out", out, "--dump", out / "dump") == 0
    return out


def test_simulate_outputs(simulated):
    summ = json.loads((simulated / "small_summary.json").read_text())
    cli.validate(summ, "summary")
    assert summ["summary"]["Q"]["1000"]["count"] == 2000
    man = json.loads((simulated / "manifest.json").read_text())
    cli.validate(man, "manifest")
    assert set(man["outputs"]) == {"small_summary.json", "small_reservoir.csv", "small_raw.csv"}
    assert (simulated / "dump" / "small_raw.csv").exists()


def test_report_outputs(simulated, tmp_path):
    assert run_cli("report", simulated / "small_summary.json", "--out", tmp_path) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"variance_small_H.csv", "variance_small_H.png", "clt_hist_small_H_n1000.csv",
            "clt_hist_small_H_n1000.png"} <= names
    with open(tmp_path / "clt_hist_small_H_n1000.csv") as fh:
        rows = list(csv.DictReader(fh))
    left = np.array([float(r["bin_left"]) for r in rows])
    right = np.array([float(r["bin_right"]) for r in rows])
    dens = np.array([float(r["density"]) for r in rows])
    ref = np.array([float(r["reference_density"]) for r in rows])
    assert float((dens * (right - left)).sum()) == pytest.approx(1.0)
    assert np.allclose(ref, stats.norm.pdf(0.5 * (left + right)))
    with open(tmp_path / "variance_small_Q.csv") as fh:
        vrows = list(csv.DictReader(fh))
    assert [int(r["n"]) for r in vrows] == [100, 1000]


def test_report_errors(tmp_path):
    with pytest.raises(ReportError):
        histogram_rows([1.0, 1.0, 1.0])
    bad = tmp_path / "x.json"
    bad.write_text("{}")
    assert run_cli("report", bad, "--out", tmp_path) == 2


def test_verify_single_suite(tmp_path, capsys):
    assert run_cli("verify", "--suite", "invariants", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "verify_invariants.json").read_text())
    assert rep["verdict"] is True
    assert "overall: PASS" in capsys.readouterr().out


def test_verify_failure_exits_1(tmp_path, monkeypatch):
    def failing(suite, session):
        r = sv.VerificationReport(suite)
        r.add("forced", 1, 0, 0, False, "none")
        return r
    monkeypatch.setattr(sv, "run_suite", failing)
    assert run_cli("verify", "--suite", "exact", "--out", tmp_path) == 1


def test_shipped_plan_is_valid():
    cli.validate(json.load(open(cli.default_config_path())), "plan")

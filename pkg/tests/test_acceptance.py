"""Exit criteria of the build, one test per criterion.

A session fixture runs ``verify --suite all`` on the shipped plan twice,
with 1 and with 8 workers; every criterion is read off the resulting
reports and each prints a single PASS/FAIL line.
"""
import json
import os
import subprocess
import sys
import time

import pytest

from chargedpolymer import cli

pytestmark = pytest.mark.acceptance

RESULTS: list = []


def _record(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _verify(out, workers):
    t = time.perf_counter()
    p = subprocess.run([sys.executable, "-m", "chargedpolymer.cli", "verify", "--suite", "all",
                        "--workers", str(workers), "--out", str(out)],
                       capture_output=True, text=True)
    return p, time.perf_counter() - t


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance")
    p1, t1 = _verify(base / "w1", 1)
    p8, t8 = _verify(base / "w8", 8)
    return {"w1": (base / "w1", p1, t1), "w8": (base / "w8", p8, t8)}


@pytest.fixture(scope="session")
def checks(runs):
    out, proc, _ = runs["w1"]
    assert os.path.exists(out / "verify_all.json"), proc.stderr
    data = json.loads((out / "verify_all.json").read_text())
    return data["checks"]


def _select(checks, *prefixes):
    got = [c for c in checks if c["name"].startswith(prefixes) and c["mandatory"]]
    assert got, f"no checks matching {prefixes}"
    return got


def _all_pass(checks):
    bad = [c["name"] for c in checks if not c["passed"]]
    return not bad, bad


def _one(checks, prefix):
    (c,) = [c for c in checks if c["name"].startswith(prefix) and c["mandatory"]]
    return c


def test_c01_charge_square_identity(checks):
    sel = _select(checks, "E{(sum w)^2 - sum w^2}^2 = 2n(n-1)")
    ok, bad = _all_pass(sel)
    ns = sorted(int(c["name"].rsplit("n=", 1)[1]) for c in sel)
    _record(1, "exact charge-square identity", ok and ns == list(range(2, 11)),
            f"{len(sel)} cases n={ns[0]}..{ns[-1]} exact, failures {bad}")


def test_c02_exact_moments(checks):
    sel = _select(checks, "E H_n = 0", "E H_n^2 = E Q_n", "E Htilde_n = 0", "E Htilde_n^3",
                  "E Htilde_n^5")
    ok, bad = _all_pass(sel)
    _record(2, "exact moments of H and Htilde", ok and len(sel) == 7 * (2 + 4 * 3),
            f"{len(sel)} exact equalities/inequalities, failures {bad}")


def test_c03_truncated_inequalities(checks):
    sel = _select(checks, "A_m <= E Qtilde^m", "E Htilde^m <= bound(C)",
                  "E Htilde^2m >= (2m)!/(2^2m m!)", "E Qtilde^m <= sum binom")
    ok, bad = _all_pass(sel)
    C = [c for c in checks if c["name"] == "fitted charge-square constant C"][0]["observed"]
    _record(3, "truncated moment inequalities", ok and len(sel) == 4 * 27,
            f"{len(sel)} cases over n=4..6, m=2..4, K=2,3,inf with C={C}; failures {bad}")


def test_c04_levy(checks):
    sel = _select(checks, "Levy ")
    ok, bad = _all_pass(sel)
    _record(4, "Levy-type inequality", ok and len(sel) == 27, f"{len(sel)} exact cases, failures {bad}")


def test_c05_green_constants(checks):
    g = _one(checks, "gamma simple d=3")
    conv = _one(checks, "gamma quadrature vs convolution, simple d=3")
    res = _one(checks, "G(x) = p1(x) + sum_v p1(v) G(x-v)")
    ok = (abs(g["observed"] - 0.516386) <= 1e-4 and conv["observed"] <= 1e-4
          and res["observed"] <= res["tolerance"] and res["tolerance"] <= 1e-5 + 1e-18)
    _record(5, "Green's function constants", ok,
            f"gamma {g['observed']:.9f}, |quad - conv| {conv['observed']:.2e}, "
            f"identity residual {res['observed']:.2e} <= {res['tolerance']:.0e}")


def test_c06_mean_law(checks):
    c = _one(checks, "E Q_n/n n=100000")
    rel = abs(c["observed"] - c["target"]) / c["target"]
    _record(6, "mean law E Q_n / n", c["passed"] and rel <= 0.02,
            f"{c['observed']:.5f} vs gamma {c['target']:.5f} ({100 * rel:.2f}% off, limit 2%)")


def test_c07_clt_d3(checks, tmp_path):
    big = _one(checks, "d3 KS H_n/sqrt(gamma n) n=10000")
    dec = _one(checks, "d3 KS decreasing n=1000 -> n=10000")
    # runtime of the d=3 experiment alone, as shipped, on 8 workers
    plan = json.load(open(cli.default_config_path()))
    exp = dict(next(e for e in plan["experiments"] if e["name"] == "d3"), master_seed=1)
    cfg = tmp_path / "d3.json"
    cfg.write_text(json.dumps(exp))
    t = time.perf_counter()
    p = subprocess.run([sys.executable, "-m", "chargedpolymer.cli", "simulate", "--config", str(cfg),
                        "--workers", "8", "--out", str(tmp_path / "out")], capture_output=True, text=True)
    elapsed = time.perf_counter() - t
    ok = (big["observed"] <= 0.05 and dec["observed"] < dec["target"] and p.returncode == 0
          and elapsed <= 600)
    _record(7, "d=3 energy CLT", ok,
            f"KS {big['observed']:.4f} at n=1e4 < {dec['target']:.4f} at n=1e3; "
            f"d=3 experiment ({exp['replicates']} replicates to n={exp['n_grid'][-1]}) "
            f"took {elapsed:.0f} s with 8 workers on {os.cpu_count()} core(s), limit 600 s")


def test_c08_clt_d2(checks):
    v = _one(checks, "d2 var(H_n)/(n log n) n=100000")
    ks = _one(checks, "d2 KS")
    rel = abs(v["observed"] - v["target"]) / v["target"]
    ok = rel <= 0.15 and ks["observed"] <= 0.05
    _record(8, "d=2 energy CLT", ok,
            f"var ratio {v['observed']:.4f} vs 1/pi ({100 * rel:.1f}% off, limit 15%), KS {ks['observed']:.4f}")


def test_c09_d1_scaling(checks):
    v = _one(checks, "d1 var(H_n)/n^1.5 n=100000")
    k = _one(checks, "d1 excess kurtosis")
    ks = _one(checks, "d1 two-sample KS n=25000 vs n=100000")
    rel = abs(v["observed"] - v["target"]) / v["target"]
    ok = rel <= 0.10 and k["observed"] > 0 and ks["observed"] <= 0.05
    _record(9, "d=1 energy scaling", ok,
            f"var ratio {v['observed']:.4f} vs {v['target']:.5f} ({100 * rel:.1f}% off), "
            f"excess kurtosis {k['observed']:.3f}, two-sample KS {ks['observed']:.4f}")


def test_c10_silt_d3(checks):
    ks = _one(checks, "d3 KS studentized Q_n n=10000")
    fit = _one(checks, "d3 slope Var(Q_n) vs n log n + n")
    rel = abs(fit["observed"] - fit["target"]) / fit["target"]
    ok = ks["observed"] <= 0.05 and rel <= 0.30
    _record(10, "d=3 SILT CLT and variance", ok,
            f"studentized KS {ks['observed']:.4f}; slope {fit['observed']:.4f} vs 27/(2pi^2) "
            f"{fit['target']:.4f} ({100 * rel:.1f}% off, fit on n log n plus an O(n) term)")


def test_c11_silt_d4(checks):
    fit = _one(checks, "d4 slope Var(Q_n)")
    rel = abs(fit["observed"] - fit["target"]) / fit["target"]
    _record(11, "d=4 SILT variance", rel <= 0.30,
            f"slope {fit['observed']:.4f} vs lambda_2^2 {fit['target']:.4f} ({100 * rel:.1f}% off)")


def test_c12_moment_growth(checks):
    sel = _select(checks, "d3 Q_centered m=", "d3 J m=", "d3 range_centered m=")
    sel = [c for c in sel if "max/min" in c["name"]]
    ok = len(sel) == 9 and all(c["observed"] <= 3 for c in sel)
    worst = max(sel, key=lambda c: c["observed"])
    _record(12, "moment-growth boundedness", ok,
            f"{len(sel)} ratios, largest {worst['observed']:.3f} ({worst['name']})")


def test_c13_invariants(checks):
    sel = _select(checks, "Q = (sum l^2 - n)/2", "2H + sum w^2 = sum (sum w)^2")
    ok, bad = _all_pass(sel)
    _record(13, "per-path invariants", ok and len(sel) == 6,
            f"{len(sel)} checks over 1000 paths of length 1000 for d=1,2,3, failures {bad}")


def test_c14_lil(checks):
    sel = _select(checks, "d1 LIL", "d3 LIL")
    ok = len(sel) == 6 and all(0.2 <= c["observed"] <= 5 for c in sel)
    _record(14, "LIL smoke", ok,
            "normalized maxima / constant: " + ", ".join(f"{c['observed']:.3f}" for c in sel))


def _files(root):
    return sorted(f for f in os.listdir(root))


def _strip_manifest(path):
    m = json.loads(open(path).read())
    m.pop("started"), m.pop("finished")
    return m


def test_c15_determinism(runs):
    (a, pa, _), (b, pb, _) = runs["w1"], runs["w8"]
    same_names = _files(a) == _files(b)
    diffs = []
    for f in _files(a):
        if f == "manifest.json":
            if _strip_manifest(a / f) != _strip_manifest(b / f):
                diffs.append(f)
        elif (a / f).read_bytes() != (b / f).read_bytes():
            diffs.append(f)
    ok = (pa.returncode == 0 and pb.returncode == 0 and same_names and not diffs
          and pa.stdout == pb.stdout)
    _record(15, "determinism", ok,
            f"{len(_files(a))} files byte-identical between 1 and 8 workers "
            f"(manifest timestamps excluded), stdout identical {pa.stdout == pb.stdout}, "
            f"exit codes {pa.returncode}/{pb.returncode}, differing {diffs}")

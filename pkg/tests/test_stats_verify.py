import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from chargedpolymer import mc_engine as mc
from chargedpolymer import stats_verify as sv


def test_ks_constructed_quantiles():
    N = 999
    x = stats.norm.ppf(np.arange(1, N + 1) / (N + 1))
    assert sv.ks_statistic(x, stats.norm.cdf) <= 2 / (N + 1)


def test_ks_constant_sample():
    assert sv.ks_statistic([0, 0, 0], stats.norm.cdf) == pytest.approx(0.5)


def test_ks_self_calibration():
    rng = np.random.default_rng(2024)
    N = 10_000
    crit = 1.63 / math.sqrt(N)
    passed = sum(sv.ks_statistic(rng.standard_normal(N), stats.norm.cdf) < crit for _ in range(100))
    assert passed >= 95


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=200))
def test_ks_matches_scipy(xs):
    ref = stats.kstest(xs, "norm").statistic
    assert sv.ks_statistic(xs, stats.norm.cdf) == pytest.approx(ref, abs=1e-12)
    assert 0 <= sv.ks_statistic(xs, stats.norm.cdf) <= 1


def test_ks_empty_sample():
    with pytest.raises(sv.InsufficientData):
        sv.ks_statistic([], stats.norm.cdf)


def test_variance_fit_exact_input():
    pts = [(n, 2 * n * math.log(n)) for n in 2 ** np.arange(12, 18)]
    fit = sv.variance_scaling_fit(pts, 3)
    assert fit.slope == pytest.approx(2.0, rel=1e-9)
    assert fit.r2 == pytest.approx(1.0)
    plain = sv.variance_scaling_fit(pts, 3, lower="const")
    assert plain.slope == pytest.approx(2.0, rel=1e-9)


def test_variance_fit_recovers_lower_order_term():
    pts = [(n, 1.4 * n * math.log(n) - 5 * n) for n in 2 ** np.arange(12, 18)]
    fit = sv.variance_scaling_fit(pts, 3)
    assert (fit.slope, fit.intercept) == pytest.approx((1.4, -5.0), rel=1e-8)
    assert sv.variance_scaling_fit(pts, 3, lower="const").slope < 1.3


def test_variance_fit_d4_and_guards():
    pts = [(n, 0.77 * n + 3) for n in (1024, 2048, 4096, 8192)]
    assert sv.variance_scaling_fit(pts, 4).slope == pytest.approx(0.77)
    with pytest.raises(sv.InsufficientData):
        sv.variance_scaling_fit(pts[:3], 4)
    with pytest.raises(ValueError):
        sv.variance_scaling_fit(pts, 2)


def test_report_json_roundtrip():
    rep = sv.VerificationReport("x")
    rep.add("a", 1.5, 1.0, 0.1, False, "claim", mandatory=False)
    rep.add("b", np.float64(2.0), 2, 0, True, "claim")
    assert rep.verdict
    back = sv.VerificationReport.from_json(json.loads(rep.dumps()))
    assert back.dumps() == rep.dumps()
    assert "fail (info)" in rep.table()
    rep.add("c", 0, 1, 0, False, "claim")
    assert not rep.verdict


def test_derive_seed_distinct():
    seeds = {sv.derive_seed(1, name) for name in ("d1", "d2", "d3", "d4")}
    assert len(seeds) == 4
    assert sv.derive_seed(1, "d1") == sv.derive_seed(1, "d1")


def test_invariants_suite_small():
    rep = sv.invariants_suite(paths=20, n=300, dims=(1, 2), seed=3)
    assert rep.verdict and len(rep.checks) == 4


def test_exact_suite_small():
    rep = sv.exact_suite(n_identity=range(2, 5), n_moments=range(2, 5), n_ineq=(4,), m_ineq=(2,),
                         K_ineq=(2, "inf"), n_levy=(4,))
    assert rep.verdict


def test_lil_smoke_short_path():
    rep = sv.lil_smoke(3, 200_000, seed=5)
    assert len(rep.checks) == 1
    with pytest.raises(sv.InsufficientData):
        sv.lil_smoke(3, 100, seed=5)


def test_moment_suite_m2_equals_variance_points():
    cfg = mc.ExperimentConfig.from_dict(dict(walk={"kind": "simple", "d": 3},
                                             n_grid=[1000, 2000, 4000, 8000], replicates=300,
                                             observables=["Q"], master_seed=1))
    res = mc.run(cfg)
    pts = dict(sv.variance_points(res, 1000, 8000))
    s = res.stats["Q"]
    for j, n in enumerate(s.n_grid):
        assert s.central_moment(2)[j] == pts[n]
    rep = sv.moment_growth_suite("Q_centered", 3, res, 1000, 8000, orders=(2, 3))
    assert len(rep.checks) == 2


def test_plan_seed_override():
    plan = {"master_seed": 1, "experiments": [
        {"name": "a", "walk": {"kind": "simple", "d": 1}, "n_grid": [10], "replicates": 2}]}
    p1 = sv.VerifyPlan.from_dict(plan)
    p2 = sv.VerifyPlan.from_dict(plan, seed=2)
    assert p1.experiments["a"].master_seed != p2.experiments["a"].master_seed
    with pytest.raises(sv.InsufficientData):
        sv.Session(p1).result("missing")

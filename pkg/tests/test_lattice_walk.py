from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chargedpolymer.lattice_walk import (
    ChargeModel,
    WalkError,
    char_function,
    charge_from_spec,
    coordinate_bound,
    make_rng,
    make_walk,
    pack_vectors,
    rekey,
    sample_step_indices,
    walk_from_spec,
)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_simple_walk_covariance(d):
    w = make_walk("simple", d)
    assert w.support_size == 2 * d
    assert np.allclose(w.covariance, np.eye(d) / d)
    assert w.det_covariance_exact == Fraction(1, d ** d)
    assert w.probabilities.sum() == pytest.approx(1.0)


def test_lazy_walk_has_holding_step():
    w = make_walk("lazy", 3, hold=Fraction(1, 4))
    vecs = [tuple(v) for v in w.displacements]
    assert (0, 0, 0) in vecs
    assert np.allclose(w.covariance, np.eye(3) * 0.25)
    assert not w.uniform


@pytest.mark.parametrize("bad", [dict(kind="simple", d=0), dict(kind="lazy", d=2, hold=1),
                                 dict(kind="lazy", d=2, hold=-0.1), dict(kind="nope", d=1)])
def test_bad_walks_rejected(bad):
    with pytest.raises(WalkError):
        make_walk(**bad)


def test_spec_roundtrip():
    for w in (make_walk("simple", 2), make_walk("lazy", 3, hold=Fraction(1, 2))):
        assert walk_from_spec(w.to_spec()).to_spec() == w.to_spec()
    assert charge_from_spec("gaussian").kind == "gaussian"
    assert charge_from_spec(None).kind == "rademacher"
    assert ChargeModel("rademacher").exact


def test_rekey_matches_fresh_generator():
    g = make_rng(5, 0)
    g.bit_generator.random_raw(17)
    rekey(g, 7, 3)
    fresh = make_rng(7, 3)
    assert np.array_equal(g.bit_generator.random_raw(100), fresh.bit_generator.random_raw(100))


def test_streams_are_distinct():
    a = make_rng(1, 0).bit_generator.random_raw(8)
    b = make_rng(1, 1).bit_generator.random_raw(8)
    c = make_rng(2, 0).bit_generator.random_raw(8)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


def test_step_sampling_frequencies():
    w = make_walk("lazy", 2, hold=Fraction(1, 2))
    idx = sample_step_indices(w, make_rng(0, 0), 200_000)
    freq = np.bincount(idx, minlength=w.support_size) / idx.size
    assert np.abs(freq - w.probabilities).max() < 5e-3


def test_char_function_at_zero_and_pi():
    w = make_walk("simple", 3)
    assert char_function(w, np.zeros(3)) == pytest.approx(1.0)
    assert char_function(w, np.full(3, np.pi)) == pytest.approx(-1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4).flatmap(
    lambda d: st.lists(st.lists(st.integers(-coordinate_bound(d), coordinate_bound(d)),
                                min_size=d, max_size=d), min_size=2, max_size=20)))
def test_packing_is_injective(vectors):
    v = np.array(vectors, dtype=np.int64)
    keys = pack_vectors(v)
    uniq_v = {tuple(r) for r in v.tolist()}
    assert len(set(keys.tolist())) == len(uniq_v)


def test_packing_is_additive():
    rng = np.random.default_rng(0)
    d = 3
    b = coordinate_bound(d) // 4
    x = rng.integers(-b, b, size=(100, d))
    y = rng.integers(-b, b, size=(100, d))
    assert np.array_equal(pack_vectors(x + y), pack_vectors(x) + pack_vectors(y))


def test_asymmetric_custom_walk_rejected():
    with pytest.raises(WalkError):
        make_walk("custom", 1, steps=[((1,), 0.5), ((-1,), 0.25), ((2,), 0.25)])


def test_char_function_d1_is_cosine():
    w = make_walk("simple", 1)
    assert char_function(w, np.array([np.pi / 2])) == pytest.approx(0.0, abs=1e-15)
    for t in np.linspace(-3, 3, 13):
        assert char_function(w, np.array([t])) == pytest.approx(np.cos(t))


def test_step_moments_match_covariance():
    w = make_walk("simple", 3)
    N = 1_000_000
    x = w.displacements[sample_step_indices(w, make_rng(11, 0), N)].astype(float)
    se_mean = np.sqrt(np.diag(w.covariance) / N)
    assert np.all(np.abs(x.mean(axis=0)) <= 4 * se_mean)
    outer = x[:, :, None] * x[:, None, :]
    cov = outer.mean(axis=0)
    se_cov = outer.std(axis=0) / np.sqrt(N)
    assert np.all(np.abs(cov - w.covariance) <= 4 * se_cov + 1e-12)


def test_single_steps_on_support():
    for d in (1, 3):
        w = make_walk("simple", d)
        v = w.displacements[sample_step_indices(w, make_rng(3, 1), 50)]
        assert np.all(np.abs(v).sum(axis=1) == 1)
        again = w.displacements[sample_step_indices(w, make_rng(3, 1), 50)]
        assert np.array_equal(v, again)

import math
from fractions import Fraction

import numpy as np
import pytest

from chargedpolymer import green_constants as gc
from chargedpolymer.lattice_walk import make_walk

# classical value of the simple-walk return constant in three dimensions
WATSON_G0 = 0.516386059137


@pytest.fixture(scope="module")
def table3():
    return gc.greens_table(make_walk("simple", 3), radius=5, tol=1e-7)


def test_gamma_simple_d3(table3):
    assert table3.gamma == pytest.approx(WATSON_G0, abs=1e-8)


def test_convolution_identity(table3):
    assert gc.green_residual(table3, 5) <= 10 * table3.tol


def test_symmetry(table3):
    for x in [(1, 0, 0), (2, 1, 0), (3, 2, 1)]:
        v = table3(x)
        for p in [(x[1], x[0], x[2]), (-x[0], x[1], -x[2]), (x[2], x[1], x[0])]:
            assert table3(p) == pytest.approx(v, abs=1e-9)


def test_neighbour_relation(table3):
    # G(e1) = G(0) - 1 + ... : G(0) = sum_v p(v) (delta + G(v)) gives G(e1) = G(0)
    assert table3((1, 0, 0)) == pytest.approx(table3.gamma, abs=1e-8)


def test_far_field_asymptotics():
    w = make_walk("simple", 3)
    x = np.array([[30, 0, 0]])
    g = gc.green(w, x[0], tol=1e-6)
    assert g / gc.asymptotic_green(w, x)[0] == pytest.approx(1.0, rel=0.01)


def test_convolution_cross_check():
    w = make_walk("simple", 3)
    g, resid = gc.gamma_by_convolution(w, 2000)
    assert g == pytest.approx(WATSON_G0, abs=1e-4)


def test_lazy_walk_two_methods_agree():
    w = make_walk("lazy", 3, hold=Fraction(1, 4))
    gq = gc.green(w, None, tol=1e-6)
    gconv, _ = gc.gamma_by_convolution(w, 2000)
    assert gq == pytest.approx(gconv, abs=1e-4)
    # holding inflates visits: 1 + G = (1 + G_simple) / (1 - h)
    assert 1 + gq == pytest.approx((1 + WATSON_G0) / 0.75, abs=2e-6)


def test_return_probabilities_small_k():
    p = gc.return_probabilities(make_walk("simple", 1), 6)
    assert p[:7] == pytest.approx([1, 0, 0.5, 0, 0.375, 0, 0.3125])


def test_expected_Q_exact_small_n():
    w = make_walk("simple", 1)
    assert gc.expected_Q(w, 5) == pytest.approx(15 / 8)


def test_recurrent_dimensions_rejected():
    with pytest.raises(gc.GreenError):
        gc.greens_table(make_walk("simple", 2))


def test_lambda2_lower_bound():
    w = make_walk("simple", 4)
    lam, err, _ = gc.lambda2_squared(w)
    g = gc.green(w, None)
    assert lam > 3 * g * g + g
    assert lam == pytest.approx(0.7707, abs=2e-3)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_limit_constants(d):
    lc = gc.limit_constants(make_walk("simple", d))
    if d == 1:
        assert lc.clt_variance == pytest.approx(4 / (3 * math.sqrt(2 * math.pi)))
        assert lc.md_rate(1 / 3) == pytest.approx(-0.5)
    elif d == 2:
        assert lc.clt_variance == pytest.approx(1 / math.pi)
        assert lc.md_rate(1.0) == pytest.approx(-math.pi / 2)
    else:
        assert lc.var_Q_scale == pytest.approx(27 / (2 * math.pi ** 2))
        assert lc.md_rate(math.sqrt(2 * lc.gamma)) == pytest.approx(-1.0)
    assert set(lc.to_json()) >= {"d", "clt_variance", "lil_constant", "errors"}


def test_md_rate_rejects_nonpositive():
    with pytest.raises(ValueError):
        gc.md_rate(make_walk("simple", 3), 3, 0.0)

"""Exact enumeration, checked against values worked out by hand for short walks."""
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chargedpolymer.exact_oracle import (
    EnumerationSizeError,
    ExactEnsemble,
    brute_force_moment,
    charge_square_moment,
    charge_square_moment_brute,
    check_charge_square,
    check_levy,
    check_odd_moments,
    check_truncated_inequalities,
    elementary_symmetric,
    exact_A_m,
    exact_moment,
    moment_report,
    profile_law,
)
from chargedpolymer.lattice_walk import make_walk

F = Fraction

# d=1 simple walk. E Q_5 = 3 * 1/2 (gaps of two) + P(S_5 = S_1) = 3/2 + 6/16.
HAND = {
    ("Q", 2, 1): F(0), ("Q", 3, 1): F(1, 2), ("Q", 4, 1): F(1), ("Q", 5, 1): F(15, 8),
    ("Q", 4, 2): F(3, 2), ("H", 3, 4): F(1, 2), ("H", 4, 4): F(5, 2), ("H", 4, 3): F(0),
}


@pytest.mark.parametrize("key", sorted(HAND))
def test_hand_values_d1(simple1, key):
    q, n, m = key
    assert exact_moment(simple1, q, n, m) == HAND[key]


def test_hand_values_d2():
    w = make_walk("simple", 2)
    assert exact_moment(w, "Q", 4, 1) == F(1, 2)
    assert exact_moment(w, "H", 4, 2) == F(1, 2)


def test_charge_square_hand_values():
    # (sum w)^2 - sum w^2 is 6 w.p. 1/4 and -2 w.p. 3/4 for three charges
    assert charge_square_moment(3, 3) == 60
    assert charge_square_moment(3, 2) == 12


@pytest.mark.parametrize("n", range(2, 8))
def test_charge_square_closed_form_against_brute(n):
    for m in (2, 3, 4):
        assert charge_square_moment(n, m) == charge_square_moment_brute(n, m)
    v = check_charge_square(n, 3)
    assert v.passed and v.details["E_second"] == 2 * n * (n - 1)


@pytest.mark.parametrize("q,K", [("H", None), ("Q", None), ("Htilde", 2), ("Qtilde", 2), ("Htilde", math.inf)])
def test_profile_method_matches_full_enumeration(simple1, q, K):
    for n in (3, 5, 6):
        for m in (1, 2, 3):
            assert exact_moment(simple1, q, n, m, K) == brute_force_moment(simple1, q, n, m, K)


def test_lazy_walk_against_brute():
    w = make_walk("lazy", 1, hold=F(1, 3))
    for m in (1, 2, 3):
        assert exact_moment(w, "H", 4, m) == brute_force_moment(w, "H", 4, m)


def test_total_probability(simple1):
    ens = ExactEnsemble.build(simple1, 6)
    assert ens.total_probability() == 1
    assert sum(p for _, p in profile_law(simple1, 7)) == 1


def test_size_guard():
    with pytest.raises(EnumerationSizeError):
        ExactEnsemble.build(make_walk("simple", 3), 30)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 9), max_size=8), st.integers(0, 5))
def test_elementary_symmetric(values, m):
    import itertools
    expect = sum(math.prod(c) for c in itertools.combinations(values, m))
    assert elementary_symmetric(values, m) == expect


@pytest.mark.parametrize("n", range(2, 9))
def test_mean_zero_and_second_moment(simple1, n):
    assert exact_moment(simple1, "H", n, 1) == 0
    assert exact_moment(simple1, "H", n, 2) == exact_moment(simple1, "Q", n, 1)


def test_untruncated_odd_moment_can_be_nonzero(simple1):
    v = check_odd_moments(simple1, 7, 1)
    assert v.passed
    assert v.details["E_H_odd"] != 0


def test_A_m(simple1):
    # A_1 = E sum_x l(l-1)/2 = E Q
    for n in (3, 4, 5, 6):
        assert exact_A_m(simple1, n, 1) == exact_moment(simple1, "Q", n, 1)
    assert exact_A_m(simple1, 4, 2) == F(1, 2)


@pytest.mark.parametrize("K", [2, 3, math.inf])
def test_truncated_inequalities(simple1, K):
    for n in (4, 5):
        for m in (2, 3):
            v = check_truncated_inequalities(simple1, n, m, K)
            assert v.passed, v.to_json()


def test_levy_frozen(simple1):
    v = check_levy(simple1, 4, 1, 1)
    assert v.passed
    assert v.details["lhs"] == F(7, 64) and v.details["rhs"] == F(5, 4)


def test_moment_report_json(simple1):
    r = moment_report(simple1, "Q", 4, 2).to_json()
    assert (r["num"], r["den"], r["K"]) == ("3", "2", "inf")
    assert moment_report(simple1, "A", 4, 2).value == F(1, 2)
    with pytest.raises(ValueError):
        exact_moment(simple1, "Htilde", 4, 2)


def test_A_small_cases(simple1):
    assert exact_A_m(simple1, 2, 1, math.inf) == 0
    assert exact_A_m(simple1, 3, 1, math.inf) == F(1, 2)


def test_charge_square_small_n():
    assert charge_square_moment(2, 2) == 4


def test_levy_degenerate_cases(simple1):
    v = check_levy(simple1, 4, 0, 100)
    assert v.passed and v.details["lhs"] == 0 and v.details["rhs"] == 0
    assert check_levy(simple1, 4, 0, 1).passed


def test_charge_square_constant_stable():
    from chargedpolymer.exact_oracle import minimal_C
    cs = [minimal_C(charge_square_moment(n, 3), n, 3) for n in range(3, 9)]
    assert max(cs) / min(cs) < 2

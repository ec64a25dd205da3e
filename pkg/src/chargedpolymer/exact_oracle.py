"""Exact rational moments of H and Q for short walks with Rademacher charges.

Paths are enumerated with rational probabilities. Given a path, H is a sum
over visited sites of independent terms ``(s^2 - l)/2`` where ``l`` is the
local time and ``s = l - 2 Binomial(l, 1/2)`` is the charge sum there, so
conditional laws depend on the path only through its local-time profile.
Everything in this module is integer or ``Fraction`` arithmetic.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from .lattice_walk import WalkModel

SIZE_LIMIT = 10**8
SCHEMA_VERSION = 1
QUANTITIES = ("H", "Q", "Htilde", "Qtilde", "A")


class EnumerationSizeError(ValueError):
    """The requested ensemble is too large to enumerate."""


def _check_size(model: WalkModel, n: int, limit: int = SIZE_LIMIT):
    size = model.support_size ** n * 2 ** n
    if size > limit:
        raise EnumerationSizeError(
            f"{model.support_size}^{n} paths x 2^{n} charges = {size} exceeds {limit}")


def _is_inf(K) -> bool:
    return K is None or K == math.inf or K == "inf"


def _parse_K(K):
    if _is_inf(K):
        return math.inf
    K = Fraction(K)
    if K <= 0:
        raise ValueError("K must be positive")
    return K


# ---------------------------------------------------------------- ensemble
@dataclass
class ExactEnsemble:
    """All ``s^n`` paths of length n with their exact probabilities."""

    model: WalkModel
    n: int
    entries: list = field(default_factory=list)

    @classmethod
    def build(cls, model: WalkModel, n: int, limit: int = SIZE_LIMIT) -> "ExactEnsemble":
        _check_size(model, n, limit)
        steps = [tuple(int(c) for c in v) for v in model.displacements]
        probs = [p for _, p in model.steps]
        entries = []
        for choice in itertools.product(range(len(steps)), repeat=n):
            pos = (0,) * model.d
            path = []
            p = Fraction(1)
            for c in choice:
                pos = tuple(a + b for a, b in zip(pos, steps[c]))
                path.append(pos)
                p *= probs[c]
            entries.append((tuple(path), p))
        return cls(model, n, entries)

    def total_probability(self) -> Fraction:
        return sum((p for _, p in self.entries), Fraction(0))

    def profiles(self) -> dict:
        """Law of the sorted local-time profile ``(l_1 >= l_2 >= ...)``."""
        out: dict = {}
        for path, p in self.entries:
            prof = local_time_profile(path)
            out[prof] = out.get(prof, Fraction(0)) + p
        return out


def local_time_profile(path) -> tuple:
    counts: dict = {}
    for x in path:
        counts[x] = counts.get(x, 0) + 1
    return tuple(sorted(counts.values(), reverse=True))


@lru_cache(maxsize=None)
def _profile_table(model_key, n: int) -> tuple:
    model = model_key
    return tuple(sorted(ExactEnsemble.build(model, n).profiles().items()))


def profile_law(model: WalkModel, n: int) -> list:
    """Cached ``[(profile, probability)]`` for a model and length."""
    _check_size(model, n)
    return list(_profile_table(model, n))


# ----------------------------------------------------- conditional charge law
@lru_cache(maxsize=None)
def site_law(l: int) -> tuple:
    """Law of the pair sum ``(s^2 - l)/2`` at a site with ``l`` Rademacher charges."""
    law: dict = {}
    for b in range(l + 1):
        s = l - 2 * b
        v = (s * s - l) // 2
        law[v] = law.get(v, Fraction(0)) + Fraction(math.comb(l, b), 2 ** l)
    return tuple(sorted(law.items()))


@lru_cache(maxsize=None)
def conditional_law(profile: tuple) -> tuple:
    """Law of H given a local-time profile (convolution of site laws)."""
    law = {0: Fraction(1)}
    for l in profile:
        if l < 2:
            continue
        new: dict = {}
        for a, pa in law.items():
            for b, pb in site_law(l):
                new[a + b] = new.get(a + b, Fraction(0)) + pa * pb
        law = new
    return tuple(sorted(law.items()))


def conditional_moment(profile: tuple, m: int) -> Fraction:
    return sum((pv * Fraction(v) ** m for v, pv in conditional_law(profile)), Fraction(0))


def q_of(profile: tuple) -> int:
    return sum(l * (l - 1) // 2 for l in profile)


def elementary_symmetric(values, m: int) -> int:
    """``e_m`` of a list of integers by the usual DP."""
    e = [1] + [0] * m
    for v in values:
        for k in range(m, 0, -1):
            e[k] += e[k - 1] * v
    return e[m]


# ------------------------------------------------------------------ reports
@dataclass(frozen=True)
class MomentReport:
    quantity: str
    n: int
    m: int
    K: object
    value: Fraction

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "quantity": self.quantity,
            "n": self.n,
            "m": self.m,
            "K": "inf" if _is_inf(self.K) else _json_number(self.K),
            "num": str(self.value.numerator),
            "den": str(self.value.denominator),
        }


def _json_number(x):
    x = Fraction(x)
    return int(x) if x.denominator == 1 else str(x)


def exact_moment(model: WalkModel, quantity: str, n: int, m: int, K=None) -> Fraction:
    """Exact ``E[quantity^m]`` under the path law and uniform Rademacher charges.

    ``quantity`` is one of H, Q, Htilde, Qtilde; the truncated ones need K
    (``math.inf`` or ``"inf"`` allowed).
    """
    if quantity not in ("H", "Q", "Htilde", "Qtilde"):
        raise ValueError(f"unknown quantity {quantity!r}")
    if m < 0:
        raise ValueError("m must be nonnegative")
    if quantity in ("Htilde", "Qtilde"):
        if K is None:
            raise ValueError(f"{quantity} needs a truncation level K")
        Kv = _parse_K(K)
    else:
        Kv = math.inf
    total = Fraction(0)
    for prof, p in profile_law(model, n):
        keep = prof[0] <= Kv if prof else True
        if not keep:
            if m == 0:
                total += p
            continue
        if quantity in ("H", "Htilde"):
            total += p * conditional_moment(prof, m)
        else:
            total += p * Fraction(q_of(prof)) ** m
    return total


def exact_A_m(model: WalkModel, n: int, m: int, K=None) -> Fraction:
    """``A_m(n) = 2^-m sum over distinct-site tuples of E[1{sup l <= K} prod l(l-1)]``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    Kv = _parse_K(K)
    total = Fraction(0)
    for prof, p in profile_law(model, n):
        if prof[0] > Kv:
            continue
        e = elementary_symmetric([l * (l - 1) for l in prof], m)
        total += p * math.factorial(m) * e
    return total / 2 ** m


def moment_report(model: WalkModel, quantity: str, n: int, m: int, K=None) -> MomentReport:
    if quantity == "A":
        return MomentReport("A", n, m, K if K is not None else "inf", exact_A_m(model, n, m, K))
    return MomentReport(quantity, n, m, K, exact_moment(model, quantity, n, m, K))


# --------------------------------------------------------- brute force oracles
def brute_force_moment(model: WalkModel, quantity: str, n: int, m: int, K=None) -> Fraction:
    """Same as ``exact_moment`` but enumerating all 2^n charge vectors per path."""
    Kv = _parse_K(K) if quantity in ("Htilde", "Qtilde") else math.inf
    ens = ExactEnsemble.build(model, n)
    total = Fraction(0)
    for path, p in ens.entries:
        prof = local_time_profile(path)
        keep = prof[0] <= Kv
        if quantity in ("Q", "Qtilde"):
            total += p * Fraction(q_of(prof) if keep else 0) ** m
            continue
        acc = Fraction(0)
        for ch in itertools.product((-1, 1), repeat=n):
            h = 0
            for k in range(n):
                for j in range(k):
                    if path[j] == path[k]:
                        h += ch[j] * ch[k]
            acc += Fraction(h if keep else 0) ** m
        total += p * acc / 2 ** n
    return total


def charge_square_moment(n: int, m: int) -> Fraction:
    """``E|(sum w)^2 - sum w^2|^m`` for n Rademacher charges."""
    total = Fraction(0)
    for b in range(n + 1):
        s = n - 2 * b
        total += Fraction(math.comb(n, b), 2 ** n) * abs(s * s - n) ** m
    return total


def charge_square_moment_brute(n: int, m: int) -> Fraction:
    total = 0
    for ch in itertools.product((-1, 1), repeat=n):
        total += abs(sum(ch) ** 2 - n) ** m
    return Fraction(total, 2 ** n)


# ------------------------------------------------------------------ verdicts
@dataclass
class Verdict:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "details": {k: _jsonable(v) for k, v in self.details.items()}}


def _jsonable(v):
    if isinstance(v, Fraction):
        return {"num": str(v.numerator), "den": str(v.denominator)}
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if v == math.inf:
        return "inf"
    return v


def minimal_C(lhs: Fraction, n: int, m: int, precision: Fraction = Fraction(1, 10**9)) -> Fraction:
    """Smallest dyadic C (within `precision`) with ``lhs <= m! (C n(n-1))^(m/2)``.

    Compared in squared form, ``(lhs/m!)^2 <= (C n(n-1))^m``, so no roots are
    taken.
    """
    a = n * (n - 1)
    target = (lhs / math.factorial(m)) ** 2
    if target == 0 or a == 0:
        return Fraction(0)

    def ok(c):
        return target <= (c * a) ** m

    hi = Fraction(1)
    while not ok(hi):
        hi *= 2
    lo = Fraction(0)
    while hi - lo > precision:
        mid = (lo + hi) / 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def check_charge_square(n: int, m: int = 2) -> Verdict:
    """``E{(sum w)^2 - sum w^2}^2 = 2n(n-1)`` exactly; for ``m >= 3`` also the
    minimal C in ``E|(sum w)^2 - sum w^2|^m <= m! (C n(n-1))^(m/2)``."""
    lhs2 = charge_square_moment(n, 2)
    rhs2 = 2 * n * (n - 1)
    details = {"n": n, "E_second": lhs2, "2n(n-1)": rhs2}
    passed = lhs2 == rhs2
    if m >= 3:
        lhs = charge_square_moment(n, m)
        details["m"] = m
        details["E_abs_m"] = lhs
        details["C_min"] = minimal_C(lhs, n, m)
    return Verdict(f"charge_square n={n} m={m}", passed, details)


def fit_charge_square_C(n_max: int, m_max: int) -> Fraction:
    """Max over ``2 <= l <= n_max``, ``2 <= i <= m_max`` of the minimal charge-square constant."""
    best = Fraction(0)
    for l in range(2, n_max + 1):
        for i in range(2, m_max + 1):
            best = max(best, minimal_C(charge_square_moment(l, i), l, i))
    return best


def _square_at_least(x: Fraction, denominator: int = 1000) -> Fraction:
    """Smallest c with denominator `denominator` and c^2 >= x; returns c."""
    c = Fraction(math.isqrt(int(x * denominator ** 2)), denominator)
    while c * c < x:
        c += Fraction(1, denominator)
    return c


def energy_upper_rhs(m: int, K: Fraction, c: Fraction, EQ: dict) -> Fraction:
    """Upper bound for ``E Htilde^m`` with ``C = c^2`` and ``EQ[l] = E Qtilde^l``:

    ``m!/2^m sum_{l<=m/2} K^(m-2l) 2^l C^(m/2-l) binom(m-l-1, m-2l) EQ[l] / l!``.
    """
    total = Fraction(0)
    for l in range(1, m // 2 + 1):
        total += (Fraction(1, math.factorial(l)) * K ** (m - 2 * l) * 2 ** l * c ** (m - 2 * l)
                  * math.comb(m - l - 1, m - 2 * l) * EQ[l])
    return Fraction(math.factorial(m), 2 ** m) * total


def minimal_c_energy_upper(lhs: Fraction, m: int, K: Fraction, EQ: dict) -> Fraction:
    """Smallest dyadic ``c = sqrt(C)`` making the ``E Htilde^m`` bound hold (0 if any c works)."""
    if lhs <= energy_upper_rhs(m, K, Fraction(0), EQ):
        return Fraction(0)
    hi = Fraction(1)
    while lhs > energy_upper_rhs(m, K, hi, EQ):
        hi *= 2
    lo = Fraction(0)
    while hi - lo > Fraction(1, 10**6):
        mid = (lo + hi) / 2
        if lhs <= energy_upper_rhs(m, K, mid, EQ):
            hi = mid
        else:
            lo = mid
    return hi


def check_truncated_inequalities(model: WalkModel, n: int, m: int, K=None, C: Fraction | None = None) -> Verdict:
    """Check the truncated moment inequalities exactly for one (n, m, K).

    * ``A_m <= E Qtilde^m``
    * ``E Htilde^m <= energy_upper_rhs(m, K, sqrt(C))``
    * ``E Htilde^(2m) >= (2m)!/(2^(2m) m!) A_m`` (and the stronger ``2^m`` form)
    * ``E Qtilde^m <= sum_l binom(m, l) (l K^2/2)^(m-l) A_l``

    ``K = inf`` uses ``K_eff = n`` (the largest possible local time) where K
    appears on a right-hand side. ``C`` defaults to ``max(1, fitted charge-square
    constant)`` rounded up to a rational square so half powers stay exact.
    """
    Kv = _parse_K(K)
    K_eff = Fraction(n) if Kv == math.inf else Kv
    if C is None:
        C = max(Fraction(1), fit_charge_square_C(n, max(m, 2)))
    c = _square_at_least(C)
    EQ = {l: exact_moment(model, "Qtilde", n, l, Kv) for l in range(1, m + 1)}
    A = {l: exact_A_m(model, n, l, Kv) for l in range(1, m + 1)}
    EH = exact_moment(model, "Htilde", n, m, Kv)
    EH2m = exact_moment(model, "Htilde", n, 2 * m, Kv)

    ok_a = A[m] <= EQ[m]
    r_hm = energy_upper_rhs(m, K_eff, c, EQ)
    ok_hm = EH <= r_hm
    r_h2m = Fraction(math.factorial(2 * m), 2 ** (2 * m) * math.factorial(m)) * A[m]
    r_h2m_strong = Fraction(math.factorial(2 * m), 2 ** m * math.factorial(m)) * A[m]
    ok_h2m = EH2m >= r_h2m
    r_qm = sum((math.comb(m, l) * (l * K_eff ** 2 / 2) ** (m - l) * A[l] for l in range(1, m + 1)),
              Fraction(0))
    ok_qm = EQ[m] <= r_qm
    details = {
        "n": n, "m": m, "K": Kv, "K_eff": K_eff, "C": c * c,
        "E_Qtilde": EQ, "A": A, "E_Htilde_m": EH, "E_Htilde_2m": EH2m,
        "A_le_EQ": ok_a, "H_m_upper": ok_hm, "H_m_upper_rhs": r_hm,
        "H_2m_lower": ok_h2m, "H_2m_lower_rhs": r_h2m,
        "H_2m_lower_strong": EH2m >= r_h2m_strong, "H_2m_lower_strong_rhs": r_h2m_strong,
        "Q_m_upper": ok_qm, "Q_m_upper_rhs": r_qm,
    }
    if not ok_hm:
        details["H_m_upper_minimal_C"] = minimal_c_energy_upper(EH, m, K_eff, EQ) ** 2
    return Verdict(f"truncated_inequalities n={n} m={m} K={'inf' if Kv == math.inf else Kv}",
                   ok_a and ok_hm and ok_h2m and ok_qm, details)


def check_odd_moments(model: WalkModel, n: int, m: int, K=None) -> Verdict:
    """``E Htilde^(2m+1) >= 0``; the untruncated moment is reported alongside."""
    odd_t = exact_moment(model, "Htilde", n, 2 * m + 1, K if K is not None else math.inf)
    odd = exact_moment(model, "H", n, 2 * m + 1)
    return Verdict(f"odd n={n} m={m} K={K}", odd_t >= 0,
                   {"E_Htilde_odd": odd_t, "E_H_odd": odd})


# ------------------------------------------------------------------- Levy
def _levy_law(model: WalkModel, n: int) -> list:
    """``[(probability, (H_1, ..., H_n))]`` over all steps and charges."""
    _check_size(model, n)
    steps = [tuple(int(c) for c in v) for v in model.displacements]
    probs = [p for _, p in model.steps]
    half = Fraction(1, 2)
    out = []

    def rec(k, pos, sites, h, hist, p):
        if k == n:
            out.append((p, tuple(hist)))
            return
        for si, v in enumerate(steps):
            x = tuple(a + b for a, b in zip(pos, v))
            prev = sites.get(x)
            cs = prev or 0
            for w in (-1, 1):
                sites[x] = cs + w
                hist.append(h + w * cs)
                rec(k + 1, x, sites, h + w * cs, hist, p * probs[si] * half)
                hist.pop()
            if prev is None:
                del sites[x]
            else:
                sites[x] = prev

    rec(0, (0,) * model.d, {}, 0, [], Fraction(1))
    return out


@lru_cache(maxsize=None)
def _levy_cached(model: WalkModel, n: int) -> tuple:
    return tuple(_levy_law(model, n))


def check_levy(model: WalkModel, n: int, s, t) -> Verdict:
    """Exact sides of ``min_k P{|H_k|<=s} P{max_l |H_l| >= s+t} <= 2 P{|H_n| >= t}``."""
    s = Fraction(s)
    t = Fraction(t)
    law = _levy_cached(model, n)
    pk = [sum((p for p, hs in law if abs(hs[k]) <= s), Fraction(0)) for k in range(n)]
    pmax = sum((p for p, hs in law if max(abs(h) for h in hs) >= s + t), Fraction(0))
    ptail = sum((p for p, hs in law if abs(hs[-1]) >= t), Fraction(0))
    lhs = min(pk) * pmax
    rhs = 2 * ptail
    return Verdict(f"levy n={n} s={s} t={t}", lhs <= rhs,
                   {"min_P_small": min(pk), "P_max": pmax, "P_tail": ptail, "lhs": lhs, "rhs": rhs})

"""Symmetric random walks on Z^d and i.i.d. symmetric charges.

Step tables are validated with exact rationals; sampling uses floats through
an alias table built once per model. Random streams are counter based
(Philox keyed by ``(master_seed, stream)``) so any replicate can be replayed
without storing generator state.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "WalkModel",
    "ChargeModel",
    "WalkError",
    "make_walk",
    "walk_from_spec",
    "charge_from_spec",
    "make_rng",
    "sample_step",
    "sample_step_indices",
    "char_function",
]

_MASK64 = (1 << 64) - 1


class WalkError(ValueError):
    """Raised for step tables violating the walk invariants."""


def _as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, float):
        # "0.3" -> 3/10 rather than the nearest binary fraction
        return Fraction(repr(p))
    return Fraction(p)


def _lattice_index(vectors: Sequence[Sequence[int]], d: int) -> int:
    """Index of the subgroup generated by `vectors` in Z^d (0 if rank < d).

    Integer row reduction (Hermite style): the product of the pivots is the
    index, so the vectors generate Z^d exactly when it equals 1.
    """
    rows = [list(v) for v in vectors if any(v)]
    index = 1
    for col in range(d):
        active = [r for r in rows if r[col] != 0]
        rest = [r for r in rows if r[col] == 0]
        if not active:
            return 0
        while len(active) > 1:
            active.sort(key=lambda r: abs(r[col]))
            pivot = active[0]
            reduced = [pivot]
            for r in active[1:]:
                q = r[col] // pivot[col]
                r = [a - q * b for a, b in zip(r, pivot)]
                if r[col] != 0:
                    reduced.append(r)
                elif any(r):
                    rest.append(r)
            active = reduced
        index *= abs(active[0][col])
        rows = rest
    return index


@dataclass(frozen=True)
class WalkModel:
    """A symmetric step law on Z^d with finite support.

    ``steps`` holds ``(displacement, probability)`` pairs with exact rational
    probabilities. Use :func:`make_walk` to build one; the constructor
    validates everything.
    """

    d: int
    steps: tuple[tuple[tuple[int, ...], Fraction], ...]
    kind: str = "custom"
    hold: Fraction | None = None

    def __post_init__(self):
        if self.d < 1:
            raise WalkError(f"dimension must be >= 1, got {self.d}")
        seen: dict[tuple[int, ...], Fraction] = {}
        for v, p in self.steps:
            if len(v) != self.d:
                raise WalkError(f"displacement {v} is not in Z^{self.d}")
            if p <= 0:
                raise WalkError(f"probability of {v} must be positive, got {p}")
            if v in seen:
                raise WalkError(f"displacement {v} listed twice")
            seen[v] = p
        total = sum(seen.values(), Fraction(0))
        if total != 1:
            raise WalkError(f"probabilities sum to {total}, not 1")
        for v, p in seen.items():
            neg = tuple(-c for c in v)
            if seen.get(neg) != p:
                raise WalkError(f"step law is asymmetric at {v}")
        if _lattice_index(list(seen), self.d) != 1:
            raise WalkError("support does not generate Z^d (degenerate or sublattice walk)")

    # -- second-order data -------------------------------------------------
    @cached_property
    def covariance_exact(self) -> tuple[tuple[Fraction, ...], ...]:
        d = self.d
        cov = [[Fraction(0)] * d for _ in range(d)]
        for v, p in self.steps:
            for i in range(d):
                for j in range(d):
                    cov[i][j] += p * v[i] * v[j]
        return tuple(tuple(row) for row in cov)

    @property
    def covariance(self) -> np.ndarray:
        return np.array(self.covariance_exact, dtype=float)

    @property
    def sigma2(self) -> float:
        """Variance of one coordinate step; equals Gamma when d = 1."""
        return float(self.covariance_exact[0][0]) if self.d == 1 else float(np.trace(self.covariance) / self.d)

    @cached_property
    def det_covariance_exact(self) -> Fraction:
        return _fraction_det([list(r) for r in self.covariance_exact])

    @property
    def det_covariance(self) -> float:
        return float(self.det_covariance_exact)

    # -- sampling tables ---------------------------------------------------
    @cached_property
    def displacements(self) -> np.ndarray:
        return np.array([v for v, _ in self.steps], dtype=np.int64).reshape(len(self.steps), self.d)

    @cached_property
    def probabilities(self) -> np.ndarray:
        return np.array([float(p) for _, p in self.steps])

    @cached_property
    def uniform(self) -> bool:
        first = self.steps[0][1]
        return all(p == first for _, p in self.steps)

    @cached_property
    def alias_table(self) -> tuple[np.ndarray, np.ndarray]:
        return _build_alias(self.probabilities)

    @property
    def support_size(self) -> int:
        return len(self.steps)

    @property
    def max_step(self) -> int:
        return int(np.abs(self.displacements).max())

    def to_spec(self) -> dict:
        spec: dict = {"kind": self.kind, "d": self.d}
        if self.kind == "lazy":
            spec["hold"] = float(self.hold)
        elif self.kind == "custom":
            spec["steps"] = [[list(v), p.numerator, p.denominator] for v, p in self.steps]
        return spec


def _fraction_det(m: list[list[Fraction]]) -> Fraction:
    n = len(m)
    m = [row[:] for row in m]
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det *= m[c][c]
        for r in range(c + 1, n):
            f = m[r][c] / m[c][c]
            if f:
                m[r] = [a - f * b for a, b in zip(m[r], m[c])]
    return det


def _build_alias(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table: returns (acceptance threshold, alias index)."""
    k = len(p)
    scaled = p * k
    prob = np.ones(k)
    alias = np.arange(k)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    for i in itertools.chain(small, large):
        prob[i] = 1.0
    return prob, alias


def _unit(d: int, i: int, sign: int) -> tuple[int, ...]:
    return tuple(sign if j == i else 0 for j in range(d))


def make_walk(kind: str = "simple", d: int = 1, hold=None, steps: Iterable | None = None) -> WalkModel:
    """Build a validated walk model.

    Parameters
    ----------
    kind : {"simple", "lazy", "custom"}
        ``simple`` moves to one of the 2d neighbours uniformly; ``lazy``
        stays put with probability `hold` and otherwise makes a simple step
        (aperiodic); ``custom`` takes an explicit step table.
    d : int
        Lattice dimension.
    hold : float or Fraction, optional
        Holding probability in (0, 1) for the lazy walk.
    steps : iterable of (vector, probability), optional
        Step table for ``custom``.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise WalkError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    if kind == "simple":
        p = Fraction(1, 2 * d)
        table = tuple((_unit(d, i, s), p) for i in range(d) for s in (1, -1))
        return WalkModel(d, table, "simple")
    if kind == "lazy":
        if hold is None:
            raise WalkError("lazy walk needs a hold probability")
        h = _as_fraction(hold)
        if not 0 < h < 1:
            raise WalkError(f"hold probability must lie in (0, 1), got {h}")
        p = (1 - h) / (2 * d)
        table = ((tuple([0] * d), h),) + tuple((_unit(d, i, s), p) for i in range(d) for s in (1, -1))
        return WalkModel(d, table, "lazy", hold=h)
    if kind == "custom":
        if steps is None:
            raise WalkError("custom walk needs a step table")
        table = tuple((tuple(int(c) for c in v), _as_fraction(p)) for v, p in steps)
        return WalkModel(d, table, "custom")
    raise WalkError(f"unknown walk kind {kind!r}")


def walk_from_spec(spec: dict) -> WalkModel:
    """Build a model from the JSON form ``{"kind", "d", "hold"?, "steps"?}``."""
    kind = spec.get("kind", "simple")
    steps = None
    if kind == "custom":
        steps = [(v, Fraction(num, den)) for v, num, den in spec["steps"]]
    return make_walk(kind, int(spec["d"]), hold=spec.get("hold"), steps=steps)


@dataclass(frozen=True)
class ChargeModel:
    """Law of the i.i.d. charges: symmetric, unit variance."""

    kind: str = "rademacher"
    variance: float = field(default=1.0)

    def __post_init__(self):
        if self.kind not in ("rademacher", "gaussian"):
            raise ValueError(f"unknown charge kind {self.kind!r}")
        if self.variance != 1.0:
            raise ValueError("charges must have unit variance")

    @property
    def exact(self) -> bool:
        """Integer-valued charges, so H and charge sums stay exact integers."""
        return self.kind == "rademacher"

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "rademacher":
            return (rng.integers(0, 2, size=size, dtype=np.int8) << 1) - 1
        return rng.standard_normal(size)

    def to_spec(self) -> dict:
        return {"kind": self.kind}


def charge_from_spec(spec: dict | str | None) -> ChargeModel:
    if spec is None:
        return ChargeModel()
    if isinstance(spec, str):
        return ChargeModel(spec)
    return ChargeModel(spec.get("kind", "rademacher"))


def make_rng(master_seed: int, stream: int, counter: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(master_seed, stream)``.

    ``counter`` positions the Philox block counter, so a stream can be
    entered at any offset without replaying it.
    """
    key = np.array([master_seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    if counter:
        bitgen.advance(counter)
    return np.random.Generator(bitgen)


def rekey(rng: np.random.Generator, master_seed: int, stream: int) -> np.random.Generator:
    """Reset a Philox generator to the start of stream ``(master_seed, stream)``.

    Equivalent to ``make_rng(master_seed, stream)`` but reuses the object,
    which is several times cheaper than constructing a new one.
    """
    rng.bit_generator.state = {
        "bit_generator": "Philox",
        "state": {"counter": np.zeros(4, dtype=np.uint64),
                  "key": np.array([master_seed & _MASK64, stream & _MASK64], dtype=np.uint64)},
        "buffer": np.zeros(4, dtype=np.uint64), "buffer_pos": 4, "has_uint32": 0, "uinteger": 0,
    }
    return rng


def sample_step_indices(model: WalkModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Indices into ``model.steps`` drawn from the step law (int64 array)."""
    k = model.support_size
    if model.uniform:
        return rng.integers(0, k, size=size, dtype=np.int64)
    prob, alias = model.alias_table
    u = rng.random(size) * k
    col = u.astype(np.int64)
    np.minimum(col, k - 1, out=col)
    frac = u - col
    return np.where(frac < prob[col], col, alias[col])


def sample_step(model: WalkModel, rng: np.random.Generator) -> np.ndarray:
    """One displacement vector drawn from the step law."""
    return model.displacements[sample_step_indices(model, rng, 1)[0]].copy()


def char_function(model: WalkModel, theta) -> np.ndarray | float:
    """Characteristic function ``sum_v p_v cos(theta . v)``.

    `theta` may be a single d-vector or any array whose last axis has
    length d; the result drops that axis.
    """
    theta = np.asarray(theta, dtype=float)
    if model.d == 1 and theta.ndim == 0:
        theta = theta[None]
    if theta.shape[-1] != model.d:
        raise ValueError(f"theta must end with an axis of length {model.d}")
    if model.kind in ("simple", "lazy"):
        phi = np.cos(theta).sum(axis=-1) / model.d
        if model.kind == "lazy":
            h = float(model.hold)
            phi = h + (1.0 - h) * phi
    else:
        phi = np.zeros(theta.shape[:-1])
        for v, p in zip(model.displacements, model.probabilities):
            phi = phi + p * np.cos(theta @ v.astype(float))
    return float(phi) if np.ndim(phi) == 0 else phi


def lattice_key_bits(d: int) -> int:
    """Bits per coordinate used when packing a site into one int64 key."""
    return min(64 // d, 63)


def coordinate_bound(d: int) -> int:
    """Largest |coordinate| for which packed keys stay injective."""
    return (1 << (lattice_key_bits(d) - 1)) - 1 if d > 1 else (1 << 61)


def pack_vectors(vectors: np.ndarray) -> np.ndarray:
    """Linear packing ``sum_i c_i 2^(b i)``; additive, so key(x+v) = key(x)+key(v)."""
    vectors = np.asarray(vectors, dtype=np.int64)
    d = vectors.shape[-1]
    b = lattice_key_bits(d)
    weights = np.array([1 << (b * i) if b * i < 63 else 0 for i in range(d)], dtype=np.int64)
    return (vectors * weights).sum(axis=-1)


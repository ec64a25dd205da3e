"""Streaming observables of a charged walk.

Two implementations share one sampling routine:

* ``PathAccumulator`` / ``PairAccumulator`` are plain-Python reference
  accumulators with exact integer arithmetic for Rademacher charges.
* ``PathStreamer`` drives the compiled kernels in ``_kernels`` and records
  H, Q, range, max local time and J at a list of checkpoints.

Both consume the same random draws (``draw_chunks``), so a replicate can be
replayed step by step in Python and compared with the compiled result.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels as K
from .lattice_walk import (
    ChargeModel,
    WalkModel,
    coordinate_bound,
    lattice_key_bits,
    make_rng,
    rekey,
    pack_vectors,
)

CHUNK = 1 << 16
OBSERVABLES = ("H", "Q", "range", "max_local_time", "J")


# ---------------------------------------------------------------- reference
@dataclass
class IncrementRecord:
    dH: float
    dQ: int
    drange: int


@dataclass
class PathAccumulator:
    """Site table plus running H, Q, range and max local time.

    ``site_table`` maps a lattice point (tuple) to ``[visit_count, charge_sum]``.
    The starting point ``S_0`` is not a visit.
    """

    d: int
    site_table: dict = field(default_factory=dict)
    position: tuple = None
    n: int = 0
    H: float = 0
    Q: int = 0
    range: int = 0
    max_local_time: int = 0
    sum_charge_sq: float = 0

    def __post_init__(self):
        if self.position is None:
            self.position = (0,) * self.d


def advance(acc: PathAccumulator, step, charge) -> IncrementRecord:
    """Take one step and update every observable.

    ``dH`` is the new charge times the charge already sitting at the new
    site; ``dQ`` is the number of earlier visits to it.
    """
    pos = tuple(int(a) + int(b) for a, b in zip(acc.position, step))
    entry = acc.site_table.get(pos)
    drange = 0
    if entry is None:
        entry = [0, 0]
        acc.site_table[pos] = entry
        drange = 1
    dq = entry[0]
    dh = charge * entry[1]
    entry[0] += 1
    entry[1] += charge
    acc.position = pos
    acc.n += 1
    acc.H += dh
    acc.Q += dq
    acc.range += drange
    acc.sum_charge_sq += charge * charge
    if entry[0] > acc.max_local_time:
        acc.max_local_time = entry[0]
    return IncrementRecord(dh, dq, drange)


def truncated_values(acc: PathAccumulator, K_: float):
    """``(H, Q)`` when the max local time is at most ``K_``, else ``(0, 0)``."""
    if acc.max_local_time <= K_:
        return acc.H, acc.Q
    return 0, 0


def sum_of_squares(acc: PathAccumulator):
    """``(sum_x l(n,x)^2, sum_x charge_sum(x)^2)`` over the site table."""
    sl = sum(c * c for c, _ in acc.site_table.values())
    sw = sum(w * w for _, w in acc.site_table.values())
    return sl, sw


@dataclass
class PairAccumulator:
    """Two walks streamed in lockstep, counting mutual intersections J."""

    d: int
    counts1: dict = field(default_factory=dict)
    counts2: dict = field(default_factory=dict)
    position1: tuple = None
    position2: tuple = None
    n: int = 0
    J: int = 0

    def __post_init__(self):
        if self.position1 is None:
            self.position1 = (0,) * self.d
        if self.position2 is None:
            self.position2 = (0,) * self.d


def advance_pair(pair: PairAccumulator, step1, step2) -> int:
    """Advance both walks one step and return the increment of J."""
    p1 = tuple(int(a) + int(b) for a, b in zip(pair.position1, step1))
    p2 = tuple(int(a) + int(b) for a, b in zip(pair.position2, step2))
    dj = pair.counts2.get(p1, 0)
    pair.counts1[p1] = pair.counts1.get(p1, 0) + 1
    dj += pair.counts1.get(p2, 0)
    pair.counts2[p2] = pair.counts2.get(p2, 0) + 1
    pair.position1, pair.position2 = p1, p2
    pair.n += 1
    pair.J += dj
    return dj


def brute_force_HQ(path, charges):
    """O(n^2) double sums for H and Q over a path ``S_1..S_n``."""
    path = [tuple(p) for p in path]
    h = 0
    q = 0
    for k in range(len(path)):
        for j in range(k):
            if path[j] == path[k]:
                q += 1
                h += charges[j] * charges[k]
    return h, q


def brute_force_J(path1, path2):
    p2 = [tuple(p) for p in path2]
    return sum(1 for a in path1 for b in p2 if tuple(a) == b)


def partial_sums(steps, d: int) -> list[tuple]:
    """Path ``S_1..S_n`` of a sequence of steps started at the origin."""
    steps = np.asarray(steps, dtype=np.int64).reshape(-1, d)
    return [tuple(int(c) for c in row) for row in np.cumsum(steps, axis=0)]


# --------------------------------------------------------------- truncation
@dataclass(frozen=True)
class TruncationRule:
    """Local-time cutoff ``K_n``.

    ``scheme="moderate"`` gives ``M_n sqrt(n b_n)`` (d=1, with
    ``b_n = log log n`` and ``M_n = M (log n)^growth``), ``M (log n)^2``
    (d=2) and ``(n / log n)^(1/4)`` (d>=3). ``scheme="clt"`` gives
    ``n^((1+delta)/2)``, ``M (log n)^2`` and ``M log n``.
    """

    d: int
    scheme: str = "moderate"
    M: float = 1.0
    growth: float = 0.0
    delta: float = 0.25

    def __post_init__(self):
        if self.scheme not in ("moderate", "clt"):
            raise ValueError(f"unknown truncation scheme {self.scheme!r}")
        if self.M <= 0:
            raise ValueError("M must be positive")

    def K(self, n: int) -> float:
        if n < 3:
            return math.inf
        ln = math.log(n)
        if self.d == 1:
            if self.scheme == "clt":
                return n ** ((1.0 + self.delta) / 2.0)
            bn = max(math.log(ln), 1e-12)
            return self.M * ln ** self.growth * math.sqrt(n * bn)
        if self.d == 2:
            return self.M * ln * ln
        if self.scheme == "clt":
            return self.M * ln
        return (n / ln) ** 0.25

    def to_spec(self) -> dict:
        return {"scheme": self.scheme, "M": self.M, "growth": self.growth, "delta": self.delta}


def truncation_from_spec(d: int, spec: dict | None) -> TruncationRule | None:
    if spec is None:
        return None
    return TruncationRule(d=d, **spec)


# ------------------------------------------------------------------ draws
def replicate_streams(master_seed: int, replicate: int, gens=None, pair: bool = True):
    """Generators for steps, charges and the twin walk of one replicate.

    ``gens`` are reused (rekeyed) when given; the twin stream is None
    unless ``pair``.
    """
    base = 4 * int(replicate)
    if gens is None:
        return (make_rng(master_seed, base), make_rng(master_seed, base + 1),
                make_rng(master_seed, base + 2) if pair else None)
    return (rekey(gens[0], master_seed, base), rekey(gens[1], master_seed, base + 1),
            rekey(gens[2], master_seed, base + 2) if pair else None)


def _decode_steps(walk: WalkModel, rng: np.random.Generator, m: int) -> np.ndarray:
    words = rng.bit_generator.random_raw(m)
    out = np.empty(m, dtype=np.int64)
    if walk.uniform:
        K.decode_uniform(words, walk.support_size, out)
    else:
        prob, alias = walk.alias_table
        K.decode_alias(words, prob, alias.astype(np.int64), out)
    return out


def _decode_charges(charge: ChargeModel, rng: np.random.Generator, m: int) -> np.ndarray:
    if charge.kind == "rademacher":
        out = np.empty(m, dtype=np.int8)
        K.decode_signs(rng.bit_generator.random_raw((m + 63) >> 6), out)
        return out
    return rng.standard_normal(m)


def draw_chunks(walk: WalkModel, charge: ChargeModel, n: int, master_seed: int,
                replicate: int, pair: bool = False, gens=None) -> Iterator[tuple]:
    """Yield ``(step_idx, charges, step_idx2 or None)`` in blocks of ``CHUNK``.

    Steps are decoded from raw 64-bit Philox words, one word per step.
    """
    rs, rc, r2 = replicate_streams(master_seed, replicate, gens, pair)
    done = 0
    while done < n:
        m = min(CHUNK, n - done)
        idx = _decode_steps(walk, rs, m)
        w = _decode_charges(charge, rc, m)
        idx2 = _decode_steps(walk, r2, m) if pair else None
        yield idx, w, idx2
        done += m


# --------------------------------------------------------------- compiled
class _Table:
    """Host-side handle on one open-addressing site table."""

    def __init__(self, cap: int, real: bool, h_dtype):
        cap = max(cap, 4)
        self.real = real
        self.tab = np.zeros(2 * cap, dtype=np.int64)
        self.tab[::2] = K.EMPTY
        self.fcs = np.zeros(cap if real else 0, dtype=h_dtype)

    @property
    def capacity(self) -> int:
        return self.tab.shape[0] >> 1

    @property
    def shift(self) -> int:
        return 64 - (self.capacity.bit_length() - 1)

    def grow(self):
        cap = self.capacity * 2
        shift = 64 - (cap.bit_length() - 1)
        self.tab, self.fcs = K.rehash(self.tab, self.fcs, self.real, cap, shift)

    def clear(self):
        # the word of a slot is zeroed on insertion, so only keys need resetting
        self.tab[::2] = K.EMPTY


class CoordinateOverflow(RuntimeError):
    pass


class PathStreamer:
    """Reusable compiled walker for one (walk, charge) pair.

    Tables persist between calls and are reset with a strided fill, so a long run
    of replicates allocates only while the largest range so far grows.
    """

    def __init__(self, walk: WalkModel, charge: ChargeModel, pair: bool = False,
                 initial_capacity: int = 1 << 12, bound: int | None = None):
        self.walk = walk
        self.charge = charge
        self.pair = pair
        self.exact = charge.exact
        self.h_dtype = np.int64 if self.exact else np.float64
        self.step_vecs = np.ascontiguousarray(walk.displacements, dtype=np.int64)
        self.step_keys = pack_vectors(self.step_vecs)
        self.bound = coordinate_bound(walk.d) if bound is None else int(bound)
        self.t1 = _Table(initial_capacity, not self.exact, self.h_dtype)
        self.t2 = _Table(initial_capacity if pair else 2, False, np.int64)
        self._noidx = np.zeros(0, dtype=np.int64)
        self._gens = tuple(make_rng(0, s) for s in range(3))

    def run(self, n: int, checkpoints, master_seed: int, replicate: int) -> dict:
        """Simulate one replicate to length ``n``; values at each checkpoint."""
        cps = np.asarray(checkpoints, dtype=np.int64)
        if cps.size and (cps[-1] > n or np.any(np.diff(cps) <= 0) or cps[0] < 1):
            raise ValueError("checkpoints must be increasing within 1..n")
        try:
            return self._run_compiled(n, cps, master_seed, replicate)
        except CoordinateOverflow:
            return replay(self.walk, self.charge, n, cps, master_seed, replicate, self.pair)

    def _in_bounds(self, pos: np.ndarray, idx: np.ndarray) -> bool:
        path = pos + np.cumsum(self.step_vecs[idx], axis=0)
        ok = bool(np.abs(path).max() <= self.bound)
        pos[:] = path[-1]
        return ok

    def _run_compiled(self, n, cps, master_seed, replicate):
        ncp = cps.size
        out_h = np.zeros(ncp, dtype=self.h_dtype)
        out_q = np.zeros(ncp, dtype=np.int64)
        out_r = np.zeros(ncp, dtype=np.int64)
        out_m = np.zeros(ncp, dtype=np.int64)
        out_j = np.zeros(ncp, dtype=np.int64)
        st = np.zeros(K.STATE_SIZE, dtype=np.int64)
        hacc = np.zeros(1, dtype=self.h_dtype)
        # coordinates need tracking only if the walk could leave the key range
        track = n * self.walk.max_step > self.bound
        pos = np.zeros(self.walk.d, dtype=np.int64)
        pos2 = np.zeros(self.walk.d, dtype=np.int64)
        t1, t2 = self.t1, self.t2
        base = 0
        try:
            for idx, w, idx2 in draw_chunks(self.walk, self.charge, n, master_seed,
                                            replicate, self.pair, self._gens):
                if track and not (self._in_bounds(pos, idx)
                                  and (idx2 is None or self._in_bounds(pos2, idx2))):
                    raise CoordinateOverflow()
                if idx2 is None:
                    idx2 = self._noidx
                off = 0
                while off < idx.shape[0]:
                    done = K.walk_chunk(
                        idx[off:], self.step_keys, w[off:], base,
                        t1.tab, t1.fcs, t1.real, t1.shift, st, hacc,
                        self.pair, idx2[off:] if self.pair else idx2,
                        t2.tab, t2.shift,
                        cps, out_h, out_q, out_r, out_m, out_j)
                    off += done
                    base += done
                    if off < idx.shape[0]:
                        if st[K.RANGE] >= t1.capacity >> 1:
                            t1.grow()
                        if self.pair and st[K.RANGE2] >= t2.capacity >> 1:
                            t2.grow()
        finally:
            t1.clear()
            if self.pair:
                t2.clear()
        out = {"H": out_h, "Q": out_q, "range": out_r, "max_local_time": out_m}
        if self.pair:
            out["J"] = out_j
        return out


def replay(walk: WalkModel, charge: ChargeModel, n: int, checkpoints, master_seed: int,
           replicate: int, pair: bool = False, trajectory: list | None = None) -> dict:
    """Pure-Python rerun of one replicate with the same draws as ``PathStreamer``.

    When ``trajectory`` is a list, one row per step is appended to it
    (step, coordinates, charge, H, Q, range, max local time).
    """
    cps = [int(c) for c in checkpoints]
    acc = PathAccumulator(walk.d)
    pacc = PairAccumulator(walk.d) if pair else None
    vecs = walk.displacements
    out = {k: [] for k in ("H", "Q", "range", "max_local_time")}
    if pair:
        out["J"] = []
    ci = 0
    for idx, w, idx2 in draw_chunks(walk, charge, n, master_seed, replicate, pair):
        wl = w.tolist()
        for i in range(idx.shape[0]):
            step = vecs[idx[i]]
            advance(acc, step, wl[i])
            if pair:
                advance_pair(pacc, step, vecs[idx2[i]])
            if trajectory is not None:
                trajectory.append((acc.n, *acc.position, wl[i], acc.H, acc.Q, acc.range,
                                   acc.max_local_time))
            while ci < len(cps) and cps[ci] == acc.n:
                out["H"].append(acc.H)
                out["Q"].append(acc.Q)
                out["range"].append(acc.range)
                out["max_local_time"].append(acc.max_local_time)
                if pair:
                    out["J"].append(pacc.J)
                ci += 1
    hd = np.int64 if charge.exact else np.float64
    res = {k: np.asarray(v, dtype=hd if k == "H" else np.int64) for k, v in out.items()}
    return res


def write_trajectory(path, walk: WalkModel, charge: ChargeModel, n: int, master_seed: int,
                     replicate: int = 0) -> None:
    """Dump one replicate step by step as CSV."""
    rows: list = []
    replay(walk, charge, n, [], master_seed, replicate, trajectory=rows)
    header = ["step", *[f"x{i + 1}" for i in range(walk.d)], "charge", "H", "Q", "range",
              "max_local_time"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)


def truncate(values: np.ndarray, max_local_time: np.ndarray, K_: float) -> np.ndarray:
    """Vectorised ``value * 1{max_local_time <= K_}``."""
    return np.where(np.asarray(max_local_time) <= K_, values, np.zeros_like(values))


__all__ = [
    "CHUNK", "OBSERVABLES", "IncrementRecord", "PathAccumulator", "advance", "truncated_values",
    "sum_of_squares", "PairAccumulator", "advance_pair", "brute_force_HQ", "brute_force_J",
    "partial_sums", "TruncationRule", "truncation_from_spec", "replicate_streams", "draw_chunks",
    "PathStreamer", "replay", "write_trajectory", "truncate", "lattice_key_bits",
]

"""Batched, reproducible Monte Carlo over (walk, charge, n-grid).

Replicates are cut into fixed shards of ``SHARD`` consecutive indices. Each
shard is simulated sequentially and reduced to :class:`SummaryStats`; the
shards are then merged left to right in index order. Shard boundaries do
not depend on the worker count, so the output is the same for any number
of workers.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .lattice_walk import charge_from_spec, walk_from_spec
from .observables import PathStreamer, truncate, truncation_from_spec

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SHARD = 256
MAX_ORDER = 6
KNOWN_OBSERVABLES = ("H", "Q", "Htilde", "Qtilde", "range", "max_local_time", "J")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config
@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's output.

    ``walk`` and ``charge`` are the JSON specs of the models; ``truncation``
    is required when ``Htilde`` or ``Qtilde`` is requested.
    """

    walk: dict
    n_grid: list
    replicates: int
    master_seed: int = 0
    charge: dict = field(default_factory=lambda: {"kind": "rademacher"})
    observables: list = field(default_factory=lambda: ["H", "Q"])
    truncation: dict | None = None
    reservoir_size: int = 100_000
    name: str = "experiment"

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.walk_model = walk_from_spec(self.walk)
            self.charge_model = charge_from_spec(self.charge)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"bad model spec: {exc}") from exc
        grid = [int(n) for n in self.n_grid]
        if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must be a nonempty strictly increasing list of positive ints")
        self.n_grid = grid
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be >= 1")
        self.replicates = int(self.replicates)
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ConfigError("master_seed must fit in 64 bits")
        self.master_seed = int(self.master_seed)
        bad = [o for o in self.observables if o not in KNOWN_OBSERVABLES]
        if bad or not self.observables:
            raise ConfigError(f"unknown observables {bad}; choose from {KNOWN_OBSERVABLES}")
        self.observables = list(self.observables)
        if ({"Htilde", "Qtilde"} & set(self.observables)) and self.truncation is None:
            raise ConfigError("Htilde/Qtilde need a truncation rule")
        try:
            self.truncation_rule = truncation_from_spec(self.walk_model.d, self.truncation)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad truncation: {exc}") from exc
        if int(self.reservoir_size) < 0:
            raise ConfigError("reservoir_size must be >= 0")
        self.reservoir_size = int(self.reservoir_size)

    @property
    def pair(self) -> bool:
        return "J" in self.observables

    def to_dict(self) -> dict:
        return {
            "name": self.name, "walk": self.walk, "charge": self.charge,
            "n_grid": self.n_grid, "replicates": self.replicates,
            "master_seed": self.master_seed, "observables": self.observables,
            "truncation": self.truncation, "reservoir_size": self.reservoir_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"name", "walk", "charge", "n_grid", "replicates", "master_seed",
                 "observables", "truncation", "reservoir_size"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        missing = {"walk", "n_grid", "replicates"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys {sorted(missing)}")
        charge = d.get("charge", {"kind": "rademacher"})
        if isinstance(charge, str):
            charge = {"kind": charge}
        return cls(walk=d["walk"], n_grid=d["n_grid"], replicates=d["replicates"],
                   master_seed=d.get("master_seed", 0), charge=charge,
                   observables=d.get("observables", ["H", "Q"]),
                   truncation=d.get("truncation"),
                   reservoir_size=d.get("reservoir_size", 100_000),
                   name=d.get("name", "experiment"))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ReplicateResult:
    replicate: int
    values: dict  # observable -> array over checkpoints


# ------------------------------------------------------------------- stats
def _splitmix_array(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def reservoir_priority(master_seed: int, replicates: np.ndarray) -> np.ndarray:
    """Deterministic pseudo-random priority of each replicate; the reservoir keeps the smallest."""
    salt = _splitmix_array(np.array([master_seed], dtype=np.uint64))[0]
    return _splitmix_array(np.asarray(replicates, dtype=np.uint64) ^ salt)


@dataclass
class SummaryStats:
    """Streaming summary of one observable over a checkpoint grid.

    ``M[p-2]`` holds the central sums ``sum (x - mean)^p`` for p = 2..6.
    The reservoir keeps the ``k`` replicates of smallest priority, with
    their values at every checkpoint, so two-sample comparisons across
    checkpoints see the same paths.
    """

    n_grid: tuple
    count: int
    mean: np.ndarray
    M: np.ndarray
    min: np.ndarray
    max: np.ndarray
    res_priority: np.ndarray
    res_replicate: np.ndarray
    res_values: np.ndarray
    k: int

    @classmethod
    def empty(cls, n_grid, k: int = 100_000) -> "SummaryStats":
        c = len(n_grid)
        return cls(tuple(n_grid), 0, np.zeros(c), np.zeros((MAX_ORDER - 1, c)),
                   np.full(c, np.inf), np.full(c, -np.inf),
                   np.zeros(0, dtype=np.uint64), np.zeros(0, dtype=np.int64),
                   np.zeros((0, c)), k)

    @classmethod
    def from_values(cls, n_grid, values: np.ndarray, replicates: np.ndarray,
                    master_seed: int, k: int = 100_000) -> "SummaryStats":
        """Two-pass summary of ``values`` (replicates x checkpoints)."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(n_grid):
            raise ValueError("values must be (replicates, checkpoints)")
        if values.shape[0] == 0:
            return cls.empty(n_grid, k)
        mean = values.mean(axis=0)
        dev = values - mean
        M = np.array([(dev ** p).sum(axis=0) for p in range(2, MAX_ORDER + 1)])
        pr = reservoir_priority(master_seed, replicates)
        order = np.lexsort((replicates, pr))[:k]
        return cls(tuple(n_grid), values.shape[0], mean, M, values.min(axis=0),
                   values.max(axis=0), pr[order], np.asarray(replicates)[order].astype(np.int64),
                   values[order], k)

    # derived quantities
    def central_moment(self, p: int) -> np.ndarray:
        """Population central moment ``E (X - mean)^p``."""
        if p == 1:
            return np.zeros_like(self.mean)
        return self.M[p - 2] / self.count

    @property
    def variance(self) -> np.ndarray:
        """Unbiased sample variance."""
        if self.count < 2:
            return np.full_like(self.mean, np.nan)
        return self.M[0] / (self.count - 1)

    def reservoir_sample(self, n) -> np.ndarray:
        """Reservoir values at checkpoint ``n``, ordered by replicate index."""
        j = self.n_grid.index(int(n))
        order = np.argsort(self.res_replicate, kind="stable")
        return self.res_values[order, j]

    @property
    def reservoir_complete(self) -> bool:
        return self.res_values.shape[0] == self.count

    def to_json(self) -> dict:
        out = {}
        var = self.variance
        for j, n in enumerate(self.n_grid):
            row = {"count": self.count, "mean": float(self.mean[j]), "var": float(var[j])}
            for p in range(3, MAX_ORDER + 1):
                row[f"m{p}"] = float(self.central_moment(p)[j])
            row["min"] = float(self.min[j])
            row["max"] = float(self.max[j])
            out[str(n)] = row
        return out


def merge(a: SummaryStats, b: SummaryStats) -> SummaryStats:
    """Statistics of the concatenated sample (central sums merged pairwise)."""
    if a.n_grid != b.n_grid:
        raise ValueError("cannot merge summaries over different checkpoint grids")
    k = min(a.k, b.k)
    if b.count == 0:
        return a
    if a.count == 0:
        return b
    na, nb = a.count, b.count
    n = na + nb
    delta = b.mean - a.mean
    mean = a.mean + delta * (nb / n)
    M = np.empty_like(a.M)
    for p in range(2, MAX_ORDER + 1):
        acc = a.M[p - 2] + b.M[p - 2]
        for j in range(1, p - 1):
            acc = acc + comb(p, j, exact=True) * delta ** j * (
                (-nb / n) ** j * a.M[p - j - 2] + (na / n) ** j * b.M[p - j - 2])
        acc = acc + (na * nb * delta / n) ** p * (1.0 / nb ** (p - 1) - (-1.0 / na) ** (p - 1))
        M[p - 2] = acc
    pr = np.concatenate([a.res_priority, b.res_priority])
    rep = np.concatenate([a.res_replicate, b.res_replicate])
    vals = np.concatenate([a.res_values, b.res_values])
    order = np.lexsort((rep, pr))[:k]
    return SummaryStats(a.n_grid, n, mean, M, np.minimum(a.min, b.min), np.maximum(a.max, b.max),
                        pr[order], rep[order], vals[order], k)


# ------------------------------------------------------------------ engine
_STREAMERS: dict = {}


def _streamer(cfg: ExperimentConfig) -> PathStreamer:
    key = (json.dumps(cfg.walk, sort_keys=True), json.dumps(cfg.charge, sort_keys=True), cfg.pair)
    if key not in _STREAMERS:
        _STREAMERS.clear()
        _STREAMERS[key] = PathStreamer(cfg.walk_model, cfg.charge_model, pair=cfg.pair)
    return _STREAMERS[key]


def simulate_replicates(cfg: ExperimentConfig, start: int, stop: int) -> dict:
    """Observable matrices (replicates x checkpoints) for ``start <= r < stop``."""
    ps = _streamer(cfg)
    n = cfg.n_grid[-1]
    m = stop - start
    c = len(cfg.n_grid)
    base = {k: np.zeros((m, c), dtype=np.float64 if k == "H" else np.int64)
            for k in ("H", "Q", "range", "max_local_time", "J")}
    for i, r in enumerate(range(start, stop)):
        res = ps.run(n, cfg.n_grid, cfg.master_seed, r)
        for k, v in res.items():
            base[k][i] = v
    out = {}
    for obs in cfg.observables:
        if obs in ("Htilde", "Qtilde"):
            src = base[obs[0]]
            Ks = [cfg.truncation_rule.K(nn) for nn in cfg.n_grid]
            out[obs] = np.column_stack([
                truncate(src[:, j], base["max_local_time"][:, j], Ks[j]) for j in range(c)])
        else:
            out[obs] = base[obs]
    return out


def _run_shard(args):
    cfg_dict, start, stop, keep_raw = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    vals = simulate_replicates(cfg, start, stop)
    reps = np.arange(start, stop)
    stats = {obs: SummaryStats.from_values(cfg.n_grid, v, reps, cfg.master_seed, cfg.reservoir_size)
             for obs, v in vals.items()}
    return stats, (vals if keep_raw else None)


@dataclass
class RunResult:
    config: ExperimentConfig
    stats: dict
    raw: dict | None = None

    def summary_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.config.name,
            "config_hash": self.config.config_hash(),
            "config": self.config.to_dict(),
            "summary": {obs: s.to_json() for obs, s in self.stats.items()},
        }

    def replicate_results(self) -> list:
        if self.raw is None:
            raise ValueError("run without keep_raw has no per-replicate results")
        return [ReplicateResult(r, {k: v[r] for k, v in self.raw.items()})
                for r in range(self.config.replicates)]


def shards(replicates: int, size: int = SHARD) -> list:
    return [(s, min(s + size, replicates)) for s in range(0, replicates, size)]


def run(config: ExperimentConfig, workers: int = 1, keep_raw: bool = False) -> RunResult:
    """Simulate all replicates and merge shard summaries in index order."""
    jobs = [(config.to_dict(), a, b, keep_raw) for a, b in shards(config.replicates)]
    log.info("%s: %d replicates to n=%d in %d shards on %d worker(s)", config.name,
             config.replicates, config.n_grid[-1], len(jobs), workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_shard, jobs))
    else:
        parts = [_run_shard(j) for j in jobs]
    stats = {obs: SummaryStats.empty(config.n_grid, config.reservoir_size)
             for obs in config.observables}
    for part, _ in parts:
        for obs in config.observables:
            stats[obs] = merge(stats[obs], part[obs])
    raw = None
    if keep_raw:
        raw = {obs: np.concatenate([p[1][obs] for p in parts]) for obs in config.observables}
    return RunResult(config, stats, raw)


# ----------------------------------------------------------------- outputs
def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_summary(result: RunResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.summary_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_reservoir(result: RunResult, path) -> None:
    """CSV with columns observable, n, replicate, value."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["observable", "n", "replicate", "value"])
        for obs, s in result.stats.items():
            order = np.argsort(s.res_replicate, kind="stable")
            for j, n in enumerate(s.n_grid):
                for i in order:
                    wr.writerow([obs, n, int(s.res_replicate[i]), _fmt(s.res_values[i, j])])


def write_dump(result: RunResult, directory) -> str:
    """Per-replicate raw values as ``<name>_raw.csv`` (replicate, n, observables...)."""
    if result.raw is None:
        raise ValueError("raw values were not kept")
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{result.config.name}_raw.csv")
    obs = list(result.raw)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["replicate", "n", *obs])
        for r in range(result.config.replicates):
            for j, n in enumerate(result.config.n_grid):
                wr.writerow([r, n, *[_fmt(result.raw[o][r, j]) for o in obs]])
    return path


def load_config(path) -> ExperimentConfig | list:
    """Read one experiment, or a list under ``"experiments"``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if "experiments" in data:
        return [ExperimentConfig.from_dict(e) for e in data["experiments"]]
    return ExperimentConfig.from_dict(data)


def two_pass_moments(x: np.ndarray) -> dict:
    """Reference mean and central moments 2..6 by two passes with ``math.fsum``."""
    x = [float(v) for v in x]
    n = len(x)
    mean = math.fsum(x) / n
    out = {"mean": mean}
    for p in range(2, MAX_ORDER + 1):
        out[p] = math.fsum((v - mean) ** p for v in x) / n
    return out


__all__ = [
    "SCHEMA_VERSION", "SHARD", "ConfigError", "ExperimentConfig", "ReplicateResult",
    "SummaryStats", "merge", "run", "RunResult", "simulate_replicates", "shards",
    "write_summary", "write_reservoir", "write_dump", "load_config", "two_pass_moments",
    "reservoir_priority",
]

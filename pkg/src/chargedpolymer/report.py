"""Plot data (CSV) and figures (PNG) from summary and reservoir files.

``clt_hist_<name>_<obs>_n<n>.csv``
    bin_left, bin_right, density, reference_density. Values are standardized
    by the sample mean and standard deviation; ``density`` integrates to 1
    over the bins and ``reference_density`` is the standard normal pdf at
    the bin centre.
``variance_<name>_<obs>.csv``
    n, count, mean, variance, scale, variance_over_scale; one row per
    checkpoint, ``scale`` being the regime's growth (``n^1.5``, ``n log n``
    or ``n`` for H; ``n log n`` (d=3) or ``n`` for Q).
"""
from __future__ import annotations

import csv
import json
import math
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy import stats  # noqa: E402

HIST_BINS = 60


class ReportError(ValueError):
    pass


def load_summary(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read summary {path}: {exc}") from exc
    if not isinstance(data, dict) or "summary" not in data or "config" not in data:
        raise ReportError(f"{path} is not a summary file")
    return data


def load_reservoir(path) -> dict:
    """``{(observable, n): values ordered by replicate}``."""
    out = defaultdict(list)
    try:
        with open(path, newline="") as fh:
            rd = csv.DictReader(fh)
            for row in rd:
                out[(row["observable"], int(row["n"]))].append((int(row["replicate"]), float(row["value"])))
    except (OSError, KeyError, ValueError) as exc:
        raise ReportError(f"cannot read reservoir {path}: {exc}") from exc
    return {k: np.array([v for _, v in sorted(rows)]) for k, rows in out.items()}


def histogram_rows(values, bins: int = HIST_BINS) -> list:
    x = np.asarray(values, dtype=float)
    if x.size < 2 or x.std() == 0:
        raise ReportError("need a nondegenerate sample for a histogram")
    z = (x - x.mean()) / x.std()
    dens, edges = np.histogram(z, bins=bins, density=True)
    centres = 0.5 * (edges[:-1] + edges[1:])
    ref = stats.norm.pdf(centres)
    return [(float(a), float(b), float(c), float(r))
            for a, b, c, r in zip(edges[:-1], edges[1:], dens, ref)]


def scale_for(obs: str, d: int, n: int) -> float:
    if obs in ("H", "Htilde"):
        return n ** 1.5 if d == 1 else (n * math.log(n) if d == 2 else float(n))
    if obs in ("Q", "Qtilde", "range"):
        if d == 1:
            return n ** 3.0 if obs != "range" else float(n)
        if d == 2:
            return float(n) ** 2 if obs != "range" else n / math.log(n) ** 2
        return n * math.log(n) if d == 3 else float(n)
    return float(n)


def variance_rows(summary: dict, obs: str) -> list:
    d = int(summary["config"]["walk"]["d"])
    rows = []
    for n_str, row in sorted(summary["summary"][obs].items(), key=lambda kv: int(kv[0])):
        n = int(n_str)
        sc = scale_for(obs, d, n)
        rows.append((n, row["count"], row["mean"], row["var"], sc, row["var"] / sc))
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])


def report(summary_paths, out_dir, reservoir_paths=None, figures: bool = True) -> list:
    """Write plot-data CSVs (and PNGs) for each summary; returns the files written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    reservoir_paths = list(reservoir_paths or [])
    if not summary_paths:
        raise ReportError("no summary files given")
    for i, sp in enumerate(summary_paths):
        summ = load_summary(sp)
        name = summ.get("name", f"run{i}")
        rp = reservoir_paths[i] if i < len(reservoir_paths) else _guess_reservoir(sp)
        res = load_reservoir(rp) if rp and os.path.exists(rp) else {}
        for obs in summ["summary"]:
            rows = variance_rows(summ, obs)
            p = os.path.join(out_dir, f"variance_{name}_{obs}.csv")
            _write_csv(p, ["n", "count", "mean", "variance", "scale", "variance_over_scale"], rows)
            written.append(p)
            if figures:
                written.append(_variance_png(rows, name, obs, out_dir))
        for (obs, n), vals in sorted(res.items()):
            if obs not in ("H", "Q", "Htilde", "Qtilde"):
                continue
            try:
                rows = histogram_rows(vals)
            except ReportError:
                continue
            p = os.path.join(out_dir, f"clt_hist_{name}_{obs}_n{n}.csv")
            _write_csv(p, ["bin_left", "bin_right", "density", "reference_density"], rows)
            written.append(p)
            if figures:
                written.append(_hist_png(rows, name, obs, n, out_dir))
    return written


def _guess_reservoir(summary_path):
    base = summary_path[: -len("_summary.json")] if summary_path.endswith("_summary.json") else None
    return base + "_reservoir.csv" if base else None


def _hist_png(rows, name, obs, n, out_dir):
    left = np.array([r[0] for r in rows])
    right = np.array([r[1] for r in rows])
    dens = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(left, dens, width=right - left, align="edge", alpha=0.6, label="sample")
    grid = np.linspace(left[0], right[-1], 400)
    ax.plot(grid, stats.norm.pdf(grid), "k-", lw=1.2, label="N(0,1)")
    ax.set_xlabel(f"standardized {obs}")
    ax.set_ylabel("density")
    ax.set_title(f"{name}: {obs} at n={n}")
    ax.legend()
    fig.tight_layout()
    p = os.path.join(out_dir, f"clt_hist_{name}_{obs}_n{n}.png")
    fig.savefig(p, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return p


def _variance_png(rows, name, obs, out_dir):
    n = np.array([r[0] for r in rows], dtype=float)
    ratio = np.array([r[5] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(n, ratio, "o-")
    ax.set_xlabel("n")
    ax.set_ylabel(f"Var({obs}) / scale")
    ax.set_title(f"{name}: variance scaling of {obs}")
    fig.tight_layout()
    p = os.path.join(out_dir, f"variance_{name}_{obs}.png")
    fig.savefig(p, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return p

"""Figure rendering for sweep outputs.

Each sweep type gets one summary figure written next to its CSV file.
Rendering consumes the same row dictionaries the CSV writer receives, so
figures and delimited output always agree.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["plot_accuracy", "plot_scaling", "plot_idle", "figure_path_for"]


def figure_path_for(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".png")


def _numeric_rows(rows: list[dict], needed: tuple[str, ...]) -> list[dict]:
    return [r for r in rows if all(r[k] != "" for k in needed)]


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_accuracy(rows: list[dict], path: str | Path) -> Path:
    """Achieved relative error vs requested tolerance exponent."""
    rows = _numeric_rows(rows, ("rel_error_vs_exact", "tau_rel"))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = defaultdict(list)
    for r in rows:
        series[(r["function"], r["d"])].append(
            (-math.log10(float(r["tau_rel"])), max(float(r["rel_error_vs_exact"]), 1e-17))
        )
    for (fid, d), pts in sorted(series.items()):
        pts.sort()
        ax.semilogy([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"{fid} d={d}")
    ks = sorted({p[0] for pts in series.values() for p in pts})
    if ks:
        ax.semilogy(ks, [10.0**-k for k in ks], "k--", lw=1, label="requested")
    ax.set_xlabel("tolerance exponent k  (tau_rel = 10^-k)")
    ax.set_ylabel("relative error vs exact")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_scaling(rows: list[dict], path: str | Path) -> Path:
    """Run time (virtual units or seconds) vs worker count."""
    rows = _numeric_rows(rows, ("time", "P"))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = defaultdict(list)
    for r in rows:
        series[(r["function"], r["d"], float(r["tau_rel"]))].append(
            (int(r["P"]), float(r["time"]))
        )
    for (fid, d, tau), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"{fid} d={d} tau={tau:g}")
    ax.set_xlabel("workers")
    ax.set_ylabel("time (virtual units / seconds)")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_idle(rows: list[dict], path: str | Path) -> Path:
    """Stacked per-rank compute vs idle fractions, one panel per run."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r["function"], r["d"], float(r["tau_rel"]), int(r["P"]))].append(r)
    keys = sorted(groups)[:12]  # keep the grid readable
    ncols = min(3, max(1, len(keys)))
    nrows = max(1, (len(keys) + ncols - 1) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.0 * ncols, 3.0 * nrows), squeeze=False)
    for ax in axes.ravel()[len(keys) :]:
        ax.set_visible(False)
    for ax, key in zip(axes.ravel(), keys):
        fid, d, tau, p = key
        rs = sorted(groups[key], key=lambda r: int(r["rank"]))
        ranks = [int(r["rank"]) for r in rs]
        comp = [float(r["compute_fraction"]) for r in rs]
        idle = [float(r["idle_fraction"]) for r in rs]
        ax.bar(ranks, comp, label="compute", color="#348ABD")
        ax.bar(ranks, idle, bottom=comp, label="idle", color="#E24A33")
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("rank")
        ax.set_ylabel("fraction")
        ax.set_title(f"{fid} d={d} tau={tau:g} P={p}", fontsize=9)
    if keys:
        axes.ravel()[0].legend(fontsize=8)
    return _save(fig, path)

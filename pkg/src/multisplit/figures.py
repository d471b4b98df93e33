"""Figure rendering for the report paths: every plot is written straight to
file next to the delimited output it visualizes."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pvalue_figure(path, values, threshold, selected, names=None, title="adjusted p-values"):
    """Per-variable aggregated p-values with the selection threshold."""
    values = np.asarray(values, dtype=float)
    p = values.size
    idx = np.arange(1, p + 1)
    sel_mask = np.zeros(p, dtype=bool)
    sel_mask[np.asarray(selected, dtype=int)] = True

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.scatter(idx[~sel_mask], values[~sel_mask], s=14, color="0.55", label="not selected")
    if sel_mask.any():
        ax.scatter(idx[sel_mask], values[sel_mask], s=22, color="crimson", label="selected")
    ax.axhline(threshold, linestyle="--", color="black", linewidth=1)
    ax.set_yscale("log")
    ax.set_xlabel("variable index")
    ax.set_ylabel("p-value")
    ax.set_title(title)
    ax.legend(loc="lower right", frameon=False)
    if names is not None and sel_mask.sum() <= 12:
        for j in np.nonzero(sel_mask)[0]:
            ax.annotate(names[j], (idx[j], values[j]), textcoords="offset points",
                        xytext=(3, 3), fontsize=8)
    _finish(fig, path)


def ecdf_figure(path, ecdf_points, bound_grid, bound_values, crossing, variable):
    """Empirical distribution of one variable's per-split p-values against
    the rejection bound (broken line)."""
    pts = np.asarray(ecdf_points, dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    ax.step(pts[:, 0], pts[:, 1], where="post", color="steelblue", label="ECDF")
    ax.plot(bound_grid, bound_values, linestyle="--", color="black", label="rejection bound")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("p-value")
    ax.set_ylabel("fraction of splits")
    verdict = "crosses bound (selected)" if crossing else "no crossing"
    ax.set_title(f"{variable}: {verdict}")
    ax.legend(loc="lower right", frameon=False)
    _finish(fig, path)


def summary_figure(path, summary_rows):
    """Power vs family-wise error per (config, method): one marker each.

    ``summary_rows`` holds dicts with config, method, fwer, mean_tp.
    """
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    methods = sorted({r["method"] for r in summary_rows})
    cmap = plt.get_cmap("tab10")
    for k, method in enumerate(methods):
        xs = [r["fwer"] for r in summary_rows if r["method"] == method]
        ys = [r["mean_tp"] for r in summary_rows if r["method"] == method]
        ax.scatter(xs, ys, s=30, color=cmap(k % 10), label=method)
    ax.axvline(0.05, linestyle="--", color="black", linewidth=1)
    ax.set_xlabel("empirical FWER")
    ax.set_ylabel("mean true positives")
    ax.set_title("error vs power by method")
    ax.legend(loc="best", frameon=False, fontsize=8)
    _finish(fig, path)

"""Figure rendering for benchmark results.

Boxplots follow the benchmark convention: one box per method group with
the median line, the quartile box, and whiskers at the data extremes.
Figures are written next to the delimited output; SVG keeps them
diffable and parseable in tests.
"""

from __future__ import annotations

from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .errors import DomainError  # noqa: E402
from .evaluation import EvalRecord  # noqa: E402


def group_cmse(records: Sequence[EvalRecord]) -> Dict[str, List[float]]:
    """Successful c-MSE values keyed by method; empty groups are dropped."""
    groups: Dict[str, List[float]] = {}
    for rec in records:
        if rec.ok:
            groups.setdefault(rec.method, []).append(rec.c_mse)
    return dict(sorted(groups.items()))


def render_boxplot(records: Sequence[EvalRecord], path,
                   title: str = "c-MSE by method") -> None:
    groups = group_cmse(records)
    if not groups:
        raise DomainError("no successful records to plot")
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(groups), 4.0))
    ax.boxplot(
        list(groups.values()),
        whis=(0, 100),  # whiskers at data extremes
        showfliers=False,
    )
    ax.set_xticks(range(1, len(groups) + 1))
    ax.set_xticklabels(list(groups.keys()), rotation=20)
    ax.set_ylabel("c-MSE")
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_curves(a_grid, truth, curves: Sequence, path,
                  title: str = "potential outcome curves") -> None:
    """Overlay replicate prediction curves on the ground-truth curve."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = a_grid.ravel()
    for curve in curves:
        ax.plot(x, curve.ravel(), color="tab:blue", alpha=0.35, lw=1)
    ax.plot(x, truth.ravel(), color="black", lw=2, label="ground truth")
    ax.set_xlabel("treatment")
    ax.set_ylabel("E[Y^a]")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

"""Matplotlib renderings of the report tables, written next to the CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import ReportRow
from .reward import StabilityRow

_BAR_METRICS = ("f1", "rhits1", "em", "acc")


def render_report_figure(rows: list[ReportRow], path: str) -> None:
    """Grouped bars of the headline metrics per question type."""
    if not rows:
        return
    types = [r.question_type for r in rows]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(types)), 4.0))
    width = 0.8 / len(_BAR_METRICS)
    for i, metric in enumerate(_BAR_METRICS):
        offsets = [t + i * width for t in range(len(types))]
        ax.bar(offsets, [r.values[metric] for r in rows], width=width, label=metric)
    ax.set_xticks([t + 1.5 * width for t in range(len(types))])
    ax.set_xticklabels(types, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("Answer metrics by question type")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_stability_figure(rows: list[StabilityRow], path: str,
                            label: str = "scoring") -> None:
    """Mean per-node score standard deviation as a function of depth."""
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot([r.depth for r in rows], [r.mean_std for r in rows],
            marker="o", label=label)
    ax.set_xlabel("depth")
    ax.set_ylabel("mean score std")
    ax.set_title("Score stability by depth")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

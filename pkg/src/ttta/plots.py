"""Figure rendering for evaluation reports, written next to the TSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport

_METRIC_KEYS = ("precision", "recall", "f1")


def render_report_figure(report: EvalReport, path: str, title: str = "") -> None:
    """Bar chart of per-class precision/recall/F1 with the overall mean."""
    classes = list(report.class_means) + ["mean"]
    rows = list(report.class_means.values()) + [report.mean]
    x = np.arange(len(classes))
    width = 0.27

    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(classes)), 4))
    for k, key in enumerate(_METRIC_KEYS):
        ax.bar(x + (k - 1) * width, [r[key] for r in rows], width, label=key)
    ax.set_xticks(x)
    ax.set_xticklabels(classes, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_comparison_figure(
    reports: dict[str, EvalReport], path: str, title: str = ""
) -> None:
    """Grouped bar chart comparing methods on mean precision/recall/F1."""
    methods = list(reports)
    x = np.arange(len(methods))
    width = 0.27

    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(methods)), 4))
    for k, key in enumerate(_METRIC_KEYS):
        ax.bar(
            x + (k - 1) * width,
            [reports[m].mean[key] for m in methods],
            width,
            label=key,
        )
    ax.set_xticks(x)
    ax.set_xticklabels(methods, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean score")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

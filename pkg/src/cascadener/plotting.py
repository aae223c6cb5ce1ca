"""Matplotlib figures written next to the JSON/TSV reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PANELS = (
    ("cohesion", "Cohesion", "cohesion_merge", "higher is better"),
    ("normalized_entropy", "Normalized entropy", "entropy_min", "higher is better"),
    ("gini", "Gini coefficient", "gini_max", "lower is better"),
    ("variation_coefficient", "Variation coefficient", "cv_max", "lower is better"),
)

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _mean_cohesion(report) -> float | None:
    vals = [v for v in report.cohesion.values() if v is not None]
    return sum(vals) / len(vals) if vals else None


def _value(report, key):
    if key == "cohesion":
        return _mean_cohesion(report)
    return getattr(report, key)


def plot_metric_comparison(reports: Mapping[str, object], path: str | Path,
                           title: str | None = None) -> Path:
    """Four panels (cohesion, entropy, Gini, CV), one bar per dataset version."""
    path = Path(path)
    names = list(reports)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(11, 2.8))
        for ax, (key, label, threshold_key, hint) in zip(axes, PANELS):
            vals = [_value(reports[n], key) for n in names]
            heights = [0.0 if v is None else v for v in vals]
            bars = ax.bar(range(len(names)), heights, color=plt.cm.tab10.colors[: len(names)])
            for bar, v in zip(bars, vals):
                text = "n/a" if v is None else f"{v:.3f}"
                ax.annotate(text, (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                            ha="center", va="bottom", fontsize=7)
            first = reports[names[0]]
            ax.axhline(getattr(first.thresholds, threshold_key), color="0.4", ls="--", lw=0.8)
            ax.set_xticks(range(len(names)), names, rotation=20, ha="right")
            ax.set_title(label)
            ax.set_xlabel(hint, fontsize=7, color="0.4")
        if title:
            fig.suptitle(title)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_metric_report(report, path: str | Path) -> Path:
    """Category counts and per-category cohesion of a single report."""
    path = Path(path)
    cats = list(report.counts)
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(max(6, 0.25 * len(cats)), 5), sharex=True)
        ax1.bar(range(len(cats)), [report.counts[c] for c in cats], color="tab:blue")
        ax1.set_ylabel("entities")
        ax1.set_title(
            f"H={'n/a' if report.normalized_entropy is None else f'{report.normalized_entropy:.3f}'}"
            f"  G={report.gini:.3f}  CV={report.variation_coefficient:.3f}"
        )
        coh = [report.cohesion.get(c) for c in cats]
        ax2.bar(range(len(cats)), [0 if v is None else v for v in coh], color="tab:green")
        ax2.axhline(report.thresholds.cohesion_merge, color="0.4", ls="--", lw=0.8)
        ax2.set_ylabel("cohesion")
        ax2.set_xticks(range(len(cats)), cats, rotation=90, fontsize=6)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_convergence(metric_entries: Sequence[Mapping], path: str | Path,
                     thresholds=None) -> Path:
    """Label-distribution metrics after every logged dyncat stage."""
    path = Path(path)
    stages = [f"{e['method']}:{e['stage']}" for e in metric_entries]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(stages)), 3.2))
        for key, color in (("entropy", "tab:blue"), ("gini", "tab:orange"), ("cv", "tab:red")):
            ys = [e["labels"][key] for e in metric_entries]
            ax.plot(range(len(stages)), [float("nan") if y is None else y for y in ys],
                    marker="o", ms=3, color=color, label=key)
        if thresholds is not None:
            for value, color in ((thresholds.entropy_min, "tab:blue"),
                                 (thresholds.gini_max, "tab:orange"),
                                 (thresholds.cv_max, "tab:red")):
                ax.axhline(value, color=color, ls=":", lw=0.8)
        ax.set_xticks(range(len(stages)), stages, rotation=60, ha="right", fontsize=6)
        ax.legend(frameon=False, fontsize=7)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_eval_report(report, path: str | Path) -> Path:
    """Grouped P/R/F1 bars for each micro row of an evaluation report."""
    path = Path(path)
    rows = [r for r in report.rows if r["average"] == "micro"]
    labels = [f"{r['language']}/{r['granularity']}" for r in rows]
    width = 0.27
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(rows)), 3))
        for k, (key, color) in enumerate((("precision", "tab:blue"), ("recall", "tab:orange"),
                                          ("f1", "tab:green"))):
            xs = [i + (k - 1) * width for i in range(len(rows))]
            ax.bar(xs, [100 * r[key] for r in rows], width, color=color, label=key)
        ax.set_xticks(range(len(rows)), labels)
        ax.set_ylim(0, 105)
        ax.set_ylabel("%")
        ax.legend(frameon=False, fontsize=7, ncol=3)
        fig.savefig(path)
        plt.close(fig)
    return path

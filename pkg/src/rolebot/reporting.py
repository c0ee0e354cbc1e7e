"""Report rendering: delimited summaries plus matplotlib figures.

Every report writer produces a machine-readable delimited file and, next to
it, a figure rendered to disk (Agg backend; no display required).
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .corpus import Dialogue, StatsReport
from .evaluation import ValLabel, roc_auc
from .feedback import ErrorReport


def write_stats_report(
    stats: StatsReport, dialogues: Sequence[Dialogue], out_dir
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "corpus_stats.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["statistic", "value"])
        for key, value in stats.to_dict().items():
            writer.writerow([key, value])

    fig_path = out_dir / "corpus_stats.png"
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    turn_counts = [len(d.turns) for d in dialogues]
    axes[0].hist(turn_counts, bins=range(1, max(turn_counts) + 2), edgecolor="black")
    axes[0].set_xlabel("turns per dialogue")
    axes[0].set_ylabel("dialogues")
    axes[0].set_title("Dialogue length")
    word_counts = [len(t.text.split()) for d in dialogues for t in d.turns]
    axes[1].hist(word_counts, bins=range(1, max(word_counts) + 2), edgecolor="black")
    axes[1].set_xlabel("words per turn")
    axes[1].set_ylabel("turns")
    axes[1].set_title("Turn length")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return {"csv": csv_path, "figure": fig_path}


def write_roc_report(
    scores: Sequence[float],
    labels: Sequence[ValLabel],
    out_dir,
    threshold: Optional[float] = None,
    name: str = "unanswerable_roc",
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    auc = roc_auc(scores, labels)

    # sweep thresholds over score midpoints for the curve
    pairs = sorted(zip(scores, labels), key=lambda p: p[0])
    n_pos = sum(1 for _, l in pairs if l is ValLabel.UNANSWERABLE)
    n_neg = len(pairs) - n_pos
    points = [(0.0, 0.0)]
    tp = fp = 0
    for s, l in pairs:  # predicted unanswerable when score < t; sweep t upward
        if l is ValLabel.UNANSWERABLE:
            tp += 1
        else:
            fp += 1
        points.append((fp / n_neg, tp / n_pos))

    csv_path = out_dir / f"{name}.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        writer.writerows(points)

    fig_path = out_dir / f"{name}.png"
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([p[0] for p in points], [p[1] for p in points], marker=".", label=f"AUC = {auc:.4f}")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=1)
    if threshold is not None:
        ax.set_title(f"Unanswerable detection (max-F1 threshold = {threshold:.4f})")
    else:
        ax.set_title("Unanswerable detection")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return {"csv": csv_path, "figure": fig_path}


def write_routing_report(
    proportions: dict[str, float], out_dir, name: str = "routing"
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["route", "proportion"])
        for route, p in proportions.items():
            writer.writerow([route, p])
    fig_path = out_dir / f"{name}.png"
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(list(proportions), list(proportions.values()), color="steelblue")
    ax.set_ylabel("proportion of responses")
    ax.set_ylim(0, 1)
    ax.set_title("Response routing")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return {"csv": csv_path, "figure": fig_path}


def write_error_rate_report(
    report: ErrorReport, out_dir, name: str = "error_rate"
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["total_returned_responses", report.total_returned_responses])
        writer.writerow(["total_fixes", report.total_fixes])
        writer.writerow(["overall_rate", report.overall_rate])
        for error_type, rate in report.per_type_rates.items():
            writer.writerow([f"rate_{error_type}", rate])
    fig_path = out_dir / f"{name}.png"
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = ["overall"] + list(report.per_type_rates)
    values = [report.overall_rate] + list(report.per_type_rates.values())
    ax.bar(labels, [100 * v for v in values], color="indianred")
    ax.set_ylabel("error rate (%)")
    ax.set_title("Feedback error rates")
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return {"csv": csv_path, "figure": fig_path}

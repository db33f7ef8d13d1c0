"""Matplotlib figures rendered alongside the delimited outputs."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import EvalReport  # noqa: E402


def plot_training_log(log_path: str | Path, out_path: str | Path):
    """Loss-vs-epoch curves for each split of a training CSV log."""
    series: dict[str, tuple[list[int], list[float]]] = {}
    with open(log_path, newline="") as fh:
        for row in csv.DictReader(fh):
            epochs, losses = series.setdefault(row["split"], ([], []))
            epochs.append(int(row["epoch"]))
            losses.append(float(row["loss"]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for split, (epochs, losses) in sorted(series.items()):
        ax.plot(epochs, losses, marker="o", markersize=3, label=split)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_eval_report(report: EvalReport, lengths: list[int] | None,
                     out_dir: str | Path) -> list[Path]:
    """Metric bar chart plus a compression-length histogram."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    names = ["P", "R", "F1", "R1-F1", "R2-F1", "RL-F1"]
    values = [report.precision[0], report.recall[0], report.f1[0],
              report.rouge1[2], report.rouge2[2], report.rougeL[2]]
    ax.bar(names, [100 * v for v in values], color="steelblue")
    ax.set_ylabel("score")
    ax.set_ylim(0, 100)
    fig.tight_layout()
    path = out_dir / "metrics.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    if lengths:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(lengths, bins=range(0, max(lengths) + 2), color="darkorange",
                edgecolor="black")
        ax.set_xlabel("compression length (tokens)")
        ax.set_ylabel("count")
        fig.tight_layout()
        path = out_dir / "lengths.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written

"""Matplotlib renderings written next to the CLI's JSON outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .explain import AttributeHeatmap
from .matcher import EpochLog


def save_heatmap_figure(heatmap: AttributeHeatmap, path: str | Path, title: str = "") -> Path:
    """Attribute-distance heatmap as a PNG; darker means larger distance."""
    path = Path(path)
    fig, ax = plt.subplots(
        figsize=(max(4.0, 0.9 * len(heatmap.cols) + 2), max(3.0, 0.6 * len(heatmap.rows) + 1.5))
    )
    im = ax.imshow(heatmap.values, cmap="Reds", aspect="auto")
    ax.set_xticks(range(len(heatmap.cols)), heatmap.cols, rotation=45, ha="right")
    ax.set_yticks(range(len(heatmap.rows)), heatmap.rows)
    for i in range(len(heatmap.rows)):
        for j in range(len(heatmap.cols)):
            ax.text(j, i, f"{heatmap.values[i, j]:.2f}", ha="center", va="center", fontsize=8)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="euclidean distance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_training_curves(logs: Sequence[EpochLog], path: str | Path) -> Path:
    """Loss and validation P/R/F1 per epoch."""
    path = Path(path)
    epochs = [log.epoch for log in logs]
    fig, (ax_loss, ax_f1) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [log.loss for log in logs], marker="o", color="tab:red")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_loss.grid(alpha=0.3)
    ax_f1.plot(epochs, [log.f1 for log in logs], marker="o", label="F1")
    ax_f1.plot(epochs, [log.precision for log in logs], alpha=0.6, label="precision")
    ax_f1.plot(epochs, [log.recall for log in logs], alpha=0.6, label="recall")
    ax_f1.set_xlabel("epoch")
    ax_f1.set_ylabel("validation score")
    ax_f1.set_ylim(0, 1.05)
    ax_f1.legend()
    ax_f1.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


__all__ = ["save_heatmap_figure", "save_training_curves"]

"""Figure rendering for training runs and report tables.

Figures are written straight to files (Agg backend); each function
returns the path it wrote.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_training_curves(records, path):
    """Loss and accuracy curves over epochs, side by side."""
    path = Path(path)
    epochs = [r.epoch for r in records]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9.0, 3.5))
    ax_loss.plot(epochs, [r.train_loss for r in records], color="tab:blue")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_acc.plot(epochs, [r.train_top1 for r in records],
                label="train", color="tab:blue")
    if not all(math.isnan(r.test_top1) for r in records):
        ax_acc.plot(epochs, [r.test_top1 for r in records],
                    label="test", color="tab:orange")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("top-1 accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_acc.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_table_comparison(rows, title, path):
    """Computed vs reference savings per table row, as paired bars."""
    path = Path(path)
    labels = [f"{r.label} {r.activation}" for r in rows]
    y = range(len(rows))
    height = 0.38
    fig, ax = plt.subplots(figsize=(9.0, 0.55 * len(rows) + 1.5))
    ax.barh([i + height / 2 for i in y], [r.computed for r in rows],
            height=height, label="computed", color="tab:blue")
    ax.barh([i - height / 2 for i in y], [r.reference for r in rows],
            height=height, label="reference", color="tab:orange")
    ax.set_yticks(list(y))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("space savings (%)")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_cost_breakdown(report, path):
    """Per-layer parameter counts on a log scale."""
    path = Path(path)
    layers = [lc for lc in report.per_layer if lc.params > 0]
    fig, ax = plt.subplots(figsize=(8.0, 3.5))
    ax.bar([lc.name for lc in layers], [lc.params for lc in layers],
           color="tab:blue")
    ax.set_yscale("log")
    ax.set_ylabel("parameters")
    ax.set_title(f"{report.network}: {report.total_params:,} parameters")
    ax.tick_params(axis="x", labelrotation=45, labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path

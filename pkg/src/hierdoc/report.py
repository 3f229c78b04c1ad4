"""Figure rendering for run reports: per-run accuracy/loss curves and
multi-run comparison overlays, written as PNG files next to the CSV output.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .trainer import RunRecord


def save_curves(record: RunRecord, path: Union[str, Path], title: str = "") -> None:
    """Two panels: train/validation accuracy and loss per epoch."""
    epochs = [m.epoch for m in record.metrics]
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_acc.plot(epochs, [m.train_acc for m in record.metrics], marker="o", label="train")
    ax_acc.plot(epochs, [m.val_acc for m in record.metrics], marker="s", label="valid")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(-0.02, 1.02)
    ax_acc.legend()
    ax_loss.plot(epochs, [m.train_loss for m in record.metrics], marker="o", label="train")
    ax_loss.plot(epochs, [m.val_loss for m in record.metrics], marker="s", label="valid")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_comparison(
    runs: Sequence[Tuple[str, RunRecord]], path: Union[str, Path]
) -> None:
    """Overlay validation accuracy and loss curves across runs."""
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(10, 3.5))
    for name, record in runs:
        epochs = [m.epoch for m in record.metrics]
        ax_acc.plot(epochs, [m.val_acc for m in record.metrics], marker="o", label=name)
        ax_loss.plot(epochs, [m.val_loss for m in record.metrics], marker="o", label=name)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("val accuracy")
    ax_acc.set_ylim(-0.02, 1.02)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("val loss")
    if runs:
        ax_acc.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

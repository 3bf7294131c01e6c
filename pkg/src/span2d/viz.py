"""Matplotlib rendering for the report paths.

Figures are written next to their delimited counterparts: probability
heatmaps and boundary bar charts alongside the matrix CSV dumps, and a
loss curve alongside the training log.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["heatmap", "boundary_bars", "loss_curve"]


def _piece_ticks(ax, labels, axis: str):
    n = len(labels)
    ticks = np.arange(n)
    if axis in ("x", "both"):
        ax.set_xticks(ticks)
        ax.set_xticklabels(labels, rotation=90, fontsize=6)
    if axis in ("y", "both"):
        ax.set_yticks(ticks)
        ax.set_yticklabels(labels, fontsize=6)


def heatmap(matrix: np.ndarray, labels: list[str], path, title: str) -> None:
    matrix = np.asarray(matrix, dtype=float)
    size = max(3.5, 0.22 * matrix.shape[0])
    fig, ax = plt.subplots(figsize=(size, size))
    im = ax.imshow(matrix, cmap="viridis", vmin=0.0, vmax=1.0, interpolation="nearest")
    _piece_ticks(ax, labels, "both")
    ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def boundary_bars(values: np.ndarray, labels: list[str], path, title: str) -> None:
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.25 * len(values)), 2.8))
    ax.bar(np.arange(len(values)), values, color="#3b6ea5")
    ax.set_ylim(0.0, 1.0)
    _piece_ticks(ax, labels, "x")
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def loss_curve(history, path) -> None:
    """Plot per-epoch mean loss and its three components."""
    epochs = [h.epoch for h in history]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(epochs, [h.mean_loss for h in history], label="loss", lw=1.8)
    ax.plot(epochs, [h.f_s for h in history], label="f_s", lw=1.0, alpha=0.7)
    ax.plot(epochs, [h.f_e for h in history], label="f_e", lw=1.0, alpha=0.7)
    ax.plot(epochs, [h.f_m for h in history], label="f_m", lw=1.0, alpha=0.7)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean BCE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

"""Matplotlib rendering of loss curves, scatter comparisons, filter mosaics,
and prediction strips, written to files next to the delimited exports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curve(path, loss_curve, title: str = "training loss") -> None:
    epochs = [row[0] for row in loss_curve]
    losses = [row[2] for row in loss_curve]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, losses, marker="o", markersize=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean squared prediction error")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_scatter(path, rows, label_a: str, label_b: str) -> None:
    """Per-frame RMSE of A on x, RMSE difference (B - A) on y, mean as a cross."""
    points = [r for r in rows if r[0] != "__mean__"]
    mean = next((r for r in rows if r[0] == "__mean__"), None)
    xs = [r[2] for r in points]
    ys = [r[3] for r in points]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(xs, ys, s=8, alpha=0.5, edgecolors="none")
    ax.axhline(0.0, color="gray", lw=0.8)
    if mean is not None:
        ax.plot([mean[2]], [mean[3]], marker="+", color="black", markersize=14,
                markeredgewidth=2.5)
    ax.set_xlabel(f"RMSE {label_a}")
    ax.set_ylabel(f"RMSE {label_b} $-$ RMSE {label_a}")
    ax.set_title(f"{label_a} vs {label_b} (per frame)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_mosaic(path, mosaic: np.ndarray, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 6))
    peak = np.abs(mosaic).max()
    ax.imshow(mosaic, cmap="gray", vmin=-peak if mosaic.min() < 0 else 0, vmax=peak,
              interpolation="nearest")
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_prediction_strip(path, rows: list[dict], variant: str) -> None:
    """Rows of [x(t-1), x(t), x(t+1), prediction, error map], one per predicted frame."""
    n = len(rows)
    titles = ["$x(t-1)$", "$x(t)$", "$x(t+1)$", variant, "error"]
    fig, axes = plt.subplots(n, 5, figsize=(11, 2.3 * n), squeeze=False)
    for i, row in enumerate(rows):
        images = [row["x_tm1"], row["x_t"], row["target"], row["pred"], row["error"]]
        for j, (ax, img) in enumerate(zip(axes[i], images)):
            ax.imshow(img, cmap="gray", vmin=-1, vmax=1, interpolation="nearest")
            ax.set_axis_off()
            if i == 0:
                ax.set_title(titles[j], fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

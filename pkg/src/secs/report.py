"""Figure rendering for the report paths: distance histograms, density
overlays and training curves, written as PNG files next to the delimited
outputs. Geographic maps are deliberately out of scope; these are the
aspatial summaries."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import DensityCurve

_STYLE = {
    "figure.figsize": (9.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def save_distance_histograms(
    frechet: np.ndarray, hausdorff: np.ndarray, path: str | Path
) -> Path:
    """Side-by-side histograms of the per-cell-year curve distances."""
    path = Path(path)
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, 2)
        for ax, values, label in (
            (axes[0], np.asarray(frechet), "discrete Frechet"),
            (axes[1], np.asarray(hausdorff), "Hausdorff"),
        ):
            ax.hist(values, bins=40, color="#33679e", edgecolor="white")
            ax.axvline(np.median(values), color="#c23b22", lw=1.2,
                       label=f"median {np.median(values):.3f}")
            ax.set_xlabel(f"{label} distance (normalized)")
            ax.set_ylabel("cell-years")
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def save_density_overlay(
    truth: DensityCurve, pred: DensityCurve, path: str | Path,
    labels: tuple[str, str] = ("reference", "surrogate"),
    xlabel: str = "TWSO (kg/ha)",
) -> Path:
    """Overlaid probability densities of two pooled yield samples."""
    path = Path(path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        ax.plot(truth.grid, truth.density, color="#33679e", lw=1.4, label=labels[0])
        ax.plot(pred.grid, pred.density, color="#c23b22", lw=1.4, label=labels[1])
        ax.fill_between(
            truth.grid,
            np.minimum(truth.density, pred.density),
            color="#888888",
            alpha=0.25,
            label="overlap",
        )
        ax.set_xlabel(xlabel)
        ax.set_ylabel("probability density")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def save_training_history(
    train_loss: list[float], val_loss: list[float], path: str | Path
) -> Path:
    path = Path(path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        epochs = np.arange(len(train_loss))
        ax.plot(epochs, train_loss, color="#33679e", lw=1.4, label="train")
        ax.plot(epochs, val_loss, color="#c23b22", lw=1.4, label="validation")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("Huber loss (scaled targets)")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path

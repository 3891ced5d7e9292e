"""Static SVG figures: prediction fans, calibration curves, variance
forecasts and covariance heatmaps.

Output is byte-stable for identical inputs (fixed hash salt, no date).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "priorgp"
plt.rcParams["svg.fonttype"] = "path"


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def prediction_fan(path, trajectory, grid, predictions, *, z: float = 1.959963984540054, title: str = "") -> None:
    """One panel per observed-prefix length: mean, 95 % band and truth.

    ``predictions`` maps a prefix length to a posterior over ``grid``.
    """
    steps = sorted(predictions)
    fig, axes = plt.subplots(1, len(steps), figsize=(4.5 * len(steps), 3.6), squeeze=False)
    for ax, i in zip(axes[0], steps):
        pred = predictions[i]
        sd = np.sqrt(pred.var)
        ax.fill_between(grid, pred.mean - z * sd, pred.mean + z * sd, color="#9ecae1", label="95 % credible region")
        ax.plot(grid, pred.mean, color="#08519c", label="mean prediction")
        ax.plot(trajectory.xs, trajectory.ys, color="#cb181d", label="true trajectory")
        ax.plot(trajectory.xs[:i], trajectory.ys[:i], "o", color="#cb181d", ms=3)
        ax.set_title(f"{title} observed {i}".strip())
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    axes[0][0].legend(loc="best", fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def calibration_curve(path, results: dict) -> None:
    """``results`` maps a label to a :class:`CalibrationResult`."""
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    ax.plot([0, 1], [0, 1], "k--", lw=1)
    for label, res in results.items():
        ax.plot(res.levels, res.frequencies, "o-", label=label)
    ax.set_xlabel("credible interval")
    ax.set_ylabel("relative frequency")
    ax.set_xlim(0.4, 1.0)
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def variance_forecast(path, steps, halfwidths, *, xlabel: str = "observed points") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.step(steps, halfwidths, where="post")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("95 % half-width at target")
    fig.tight_layout()
    _save(fig, path)


def heatmap(path, matrix, grid, *, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    extent = (grid[0], grid[-1], grid[-1], grid[0])
    im = ax.imshow(matrix, extent=extent, cmap="viridis", aspect="auto")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)

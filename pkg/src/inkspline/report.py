"""Matplotlib run reports: loss curves plus the rendered result."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def write_report(result, path, target=None, title=None):
    """Save a figure with per-term loss curves and the final canvas."""
    ncols = 3 if target is not None else 2
    fig, axes = plt.subplots(1, ncols, figsize=(4 * ncols, 3.6))
    ax = axes[0]
    steps = [row["step"] for row in result.trace]
    for name in result.term_names + ["total"]:
        values = [row[name] for row in result.trace]
        if any(v > 0 for v in values):
            ax.plot(steps, values, label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title(title or "optimization trace")

    def show(axis, img, label):
        arr = np.asarray(img)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        axis.imshow(np.clip(arr, 0, 1), cmap="gray", vmin=0, vmax=1)
        axis.set_title(label)
        axis.axis("off")

    show(axes[1], result.canvas, "result")
    if target is not None:
        show(axes[2], target, "target")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""Matplotlib figures written next to the CSV/PNG outputs."""

from __future__ import annotations

import math
import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
    # keep output byte-stable across runs
    "svg.hashsalt": "burstpipe",
}


def plot_grid(images: Sequence[np.ndarray], path: str | os.PathLike, ncols: int = 6, titles=None) -> None:
    """Grid of grayscale spectrogram images under viridis, low frequencies at the bottom."""
    if not images:
        return
    ncols = min(ncols, len(images))
    nrows = math.ceil(len(images) / ncols)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrows, ncols, figsize=(1.6 * ncols, 1.6 * nrows), squeeze=False)
        for ax in axes.flat:
            ax.axis("off")
        for i, img in enumerate(images):
            ax = axes.flat[i]
            ax.imshow(img, cmap="viridis", origin="lower", vmin=0, vmax=255, interpolation="nearest")
            if titles is not None:
                ax.set_title(titles[i], fontsize=7)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)


def plot_report(report: EvalReport, path: str | os.PathLike) -> None:
    """One bar panel per score (FAD, HEEP, S_GEN) across emotions."""
    names = list(report.rows)
    if not names:
        return
    columns = [
        ("FAD (lower is better)", [report.rows[n].fad for n in names]),
        ("HEEP (higher is better)", [report.rows[n].heep for n in names]),
        ("S_GEN (higher is better)", [report.rows[n].s_gen for n in names]),
    ]
    columns = [(t, v) for t, v in columns if any(x is not None and not math.isnan(x) for x in v)]
    if not columns:
        return
    x = np.arange(len(names))
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(len(columns), 1, figsize=(max(4.0, 0.6 * len(names)), 2.0 * len(columns)),
                                 squeeze=False, sharex=True)
        for ax, (title, values) in zip(axes[:, 0], columns):
            vals = np.array([np.nan if v is None else v for v in values], dtype=float)
            finite = np.isfinite(vals)
            ax.bar(x[finite], vals[finite], color="#3b528b", width=0.7)
            for xi in x[~finite]:
                ax.text(xi, 0.0, "n/a", ha="center", va="bottom", fontsize=7, color="0.4")
            ax.set_title(title, loc="left")
            ax.axhline(0.0, color="0.3", lw=0.6)
        axes[-1, 0].set_xticks(x)
        axes[-1, 0].set_xticklabels(names, rotation=45, ha="right")
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)

"""Report rendering: spectrum plots, error curves, singular-vector panels.

Figures are written to files next to the delimited exports; nothing here
is needed by the numerical pipeline.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .compression import singular_vector_export

__all__ = [
    "render_spectrum_figure",
    "render_error_curve_figure",
    "render_singular_vector_panel",
]

FRACTION_MARKS = (0.005, 0.0125, 0.025, 0.05)


def render_spectrum_figure(spectra, path, fraction_marks=FRACTION_MARKS):
    """Semi-log plot of singular value spectra.

    spectra: mapping label -> 1-D array of singular values. Vertical lines
    mark the usual rank fractions relative to the longest spectrum.
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    longest = 0
    for label, sigma in spectra.items():
        sigma = np.asarray(sigma, dtype=np.float64)
        longest = max(longest, sigma.size)
        ax.semilogy(np.arange(1, sigma.size + 1), np.maximum(sigma, 1e-300), label=label)
    for frac in fraction_marks:
        mark = frac * longest / max(fraction_marks)
        ax.axvline(mark, color="grey", linewidth=0.6, linestyle=":")
    ax.set_xlabel("singular value index")
    ax.set_ylabel("singular value")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_error_curve_figure(curves, path):
    """Estimated reconstruction error versus rank fraction, one line per label.

    curves: mapping label -> list of records with 'fraction' and 'error'.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, records in curves.items():
        fr = [r["fraction"] for r in records]
        err = [max(r["error"], 1e-12) for r in records]
        ax.semilogy(fr, err, marker="o", label=label)
    ax.set_xlabel("fraction of singular values")
    ax.set_ylabel("estimated Frobenius error")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_singular_vector_panel(compressed, indices, path, columns=4):
    """Image grid of left singular vectors (zero rendered as mid grey)."""
    indices = [i for i in indices if 0 <= i < compressed.svd.k]
    if not indices:
        raise ValueError("no valid singular vector indices to plot")
    rows = (len(indices) + columns - 1) // columns
    fig, axes = plt.subplots(rows, columns, figsize=(2.2 * columns, 2.4 * rows))
    axes = np.atleast_1d(axes).ravel()
    for ax in axes[len(indices) :]:
        ax.axis("off")
    for ax, idx in zip(axes, indices):
        img = singular_vector_export(compressed, idx)
        ax.imshow(img.as_grid(), cmap="gray", vmin=0, vmax=255, interpolation="nearest")
        ax.set_title(f"k = {idx + 1}", fontsize=8)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

"""Bilateral and NL-means filters with explicit row-stochastic transitions.

Both filters are weighted averages, so their state transition rows are the
normalised weights themselves: the drain echo of pixel j literally is row
j of the matrix. By default the weight sums run over the full domain as in
the defining formulas; optional window/search radii zero out far pixels
for tractability on large images.
"""

from dataclasses import dataclass

import numpy as np

from .grid import Image
from .linsolve import LinearOperator

__all__ = [
    "BilateralConfig",
    "NLMeansConfig",
    "bilateral_row",
    "bilateral_matrix",
    "bilateral_apply",
    "bilateral_S",
    "nlmeans_matrix",
    "nlmeans_apply",
    "nlmeans_S",
]


@dataclass(frozen=True)
class BilateralConfig:
    """Tonal/spatial Gaussian widths; window_radius 0 means full domain."""

    sigma_t: float
    sigma_s: float
    window_radius: int = 0

    def __post_init__(self):
        if not (self.sigma_t > 0 and self.sigma_s > 0):
            raise ValueError("bilateral standard deviations must be positive")
        if self.window_radius < 0:
            raise ValueError("window radius must be nonnegative")


@dataclass(frozen=True)
class NLMeansConfig:
    """Patch-similarity Gaussian width and disk patch radius."""

    sigma: float
    patch_radius: int = 3
    search_radius: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.patch_radius < 0 or self.search_radius < 0:
            raise ValueError("radii must be nonnegative")


def _pixel_coordinates(nx, ny):
    jj, ii = np.mgrid[0:ny, 0:nx]
    return ii.ravel().astype(np.float64), jj.ravel().astype(np.float64)


def _spatial_sq_dist(nx, ny):
    xi, yj = _pixel_coordinates(nx, ny)
    dx = xi[:, None] - xi[None, :]
    dy = yj[:, None] - yj[None, :]
    return dx * dx + dy * dy


def bilateral_row(f, cfg, i):
    """Weight row p_{i,.}: Gaussian in grey distance times Gaussian in space.

    Normalised to unit sum; the self weight is always 1 before
    normalisation, so the normaliser never vanishes.
    """
    if not 0 <= i < f.n:
        raise ValueError(f"pixel index {i} out of range")
    xi, yj = _pixel_coordinates(f.nx, f.ny)
    d_space = (xi - xi[i]) ** 2 + (yj - yj[i]) ** 2
    d_tone = (f.data - f.data[i]) ** 2
    w = np.exp(-0.5 * d_tone / cfg.sigma_t**2) * np.exp(-0.5 * d_space / cfg.sigma_s**2)
    if cfg.window_radius > 0:
        w[d_space > cfg.window_radius**2] = 0.0
    return w / w.sum()


def bilateral_matrix(f, cfg):
    """Full state transition P(f); rows are nonnegative with unit sum."""
    d_space = _spatial_sq_dist(f.nx, f.ny)
    d_tone = (f.data[:, None] - f.data[None, :]) ** 2
    w = np.exp(-0.5 * d_tone / cfg.sigma_t**2) * np.exp(-0.5 * d_space / cfg.sigma_s**2)
    if cfg.window_radius > 0:
        w[d_space > cfg.window_radius**2] = 0.0
    return w / w.sum(axis=1, keepdims=True)


def bilateral_apply(f, cfg):
    return Image(f.nx, f.ny, bilateral_matrix(f, cfg) @ f.data)


def bilateral_S(f, cfg):
    p = bilateral_matrix(f, cfg)
    return LinearOperator.from_matrix(p, meta={"filter": "bilateral", "config": cfg})


# ---------------------------------------------------------------------------
# NL-means
# ---------------------------------------------------------------------------


def _disk_offsets(radius):
    offs = [
        (di, dj)
        for dj in range(-radius, radius + 1)
        for di in range(-radius, radius + 1)
        if di * di + dj * dj <= radius * radius
    ]
    return offs


def _mirror(idx, length):
    period = 2 * length
    idx = np.mod(idx, period)
    return np.where(idx >= length, period - 1 - idx, idx)


def _patch_stack(f, radius):
    """Rows of shifted copies of f (mirrored boundaries), one per disk offset."""
    grid = f.as_grid()
    rows = []
    base_i = np.arange(f.nx)
    base_j = np.arange(f.ny)
    for di, dj in _disk_offsets(radius):
        ii = _mirror(base_i + di, f.nx)
        jj = _mirror(base_j + dj, f.ny)
        rows.append(grid[np.ix_(jj, ii)].ravel())
    return np.array(rows)


def nlmeans_matrix(f, cfg):
    """State transition from Gaussian-weighted patch distances.

    Patch vectors are grey values on a disk of cfg.patch_radius around each
    pixel, extracted with mirrored boundaries; the weight for a pair is
    exp(-||patch_i - patch_j||^2 / (2 sigma^2)), normalised per row.
    """
    stack = _patch_stack(f, cfg.patch_radius)  # (|patch|, N)
    sq_norms = np.einsum("pi,pi->i", stack, stack)
    d2 = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (stack.T @ stack)
    np.maximum(d2, 0.0, out=d2)
    w = np.exp(-0.5 * d2 / cfg.sigma**2)
    if cfg.search_radius > 0:
        w[_spatial_sq_dist(f.nx, f.ny) > cfg.search_radius**2] = 0.0
    return w / w.sum(axis=1, keepdims=True)


def nlmeans_apply(f, cfg):
    return Image(f.nx, f.ny, nlmeans_matrix(f, cfg) @ f.data)


def nlmeans_S(f, cfg):
    p = nlmeans_matrix(f, cfg)
    return LinearOperator.from_matrix(p, meta={"filter": "nlmeans", "config": cfg})

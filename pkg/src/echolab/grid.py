"""Discrete images on a regular pixel grid.

Images live on an nx-by-ny grid and are stacked row-major into vectors of
length N = nx*ny with index(i, j) = j*nx + i, so that every filter in the
package can act on plain 1-D arrays. This module provides the vector/grid
conversions, PGM/PPM input and output, Gaussian pre-smoothing, central
difference derivatives, and the rescaling conventions used for display.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import PgmError

__all__ = [
    "Image",
    "Mask",
    "FlowField",
    "read_pgm",
    "parse_pgm",
    "write_pgm",
    "read_mask",
    "write_mask",
    "write_ppm",
    "gaussian_kernel",
    "gaussian_convolve",
    "gradient",
    "rescale_for_display",
    "write_csv_vector",
    "mark_location",
]


@dataclass(frozen=True)
class Image:
    """A grey-value image stored as a row-major length-N vector.

    Pixel (i, j) with 0 <= i < nx, 0 <= j < ny lives at data[j*nx + i].
    """

    nx: int
    ny: int
    data: np.ndarray

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("image dimensions must be at least 1x1")
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64).ravel())
        if data.size != self.nx * self.ny:
            raise ValueError(
                f"data length {data.size} does not match {self.nx}x{self.ny}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("grey values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def n(self):
        return self.nx * self.ny

    def index(self, i, j):
        """Linear index of pixel (i, j)."""
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError(f"pixel ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return j * self.nx + i

    def as_grid(self):
        """View the data as an (ny, nx) array; grid[j, i] = data[j*nx+i]."""
        return self.data.reshape(self.ny, self.nx)

    def with_data(self, data):
        return Image(self.nx, self.ny, data)

    @classmethod
    def from_grid(cls, grid):
        grid = np.asarray(grid, dtype=np.float64)
        ny, nx = grid.shape
        return cls(nx, ny, grid.ravel())

    @classmethod
    def constant(cls, nx, ny, value=0.0):
        return cls(nx, ny, np.full(nx * ny, float(value)))


@dataclass(frozen=True)
class Mask:
    """Binary inpainting mask; indicator is 1 on known pixels, 0 elsewhere."""

    nx: int
    ny: int
    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=np.float64).ravel()
        if ind.size != self.nx * self.ny:
            raise ValueError("indicator length does not match grid")
        if not np.all((ind == 0.0) | (ind == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "indicator", ind)

    @property
    def n(self):
        return self.nx * self.ny

    def pixel_indices(self):
        """Linear indices of mask pixels."""
        return np.flatnonzero(self.indicator > 0.5)

    @classmethod
    def from_indices(cls, nx, ny, indices):
        ind = np.zeros(nx * ny)
        ind[np.asarray(indices, dtype=int)] = 1.0
        return cls(nx, ny, ind)


@dataclass(frozen=True)
class FlowField:
    """Dense optic flow; u and v are the horizontal/vertical components."""

    nx: int
    ny: int
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64).ravel()
        v = np.asarray(self.v, dtype=np.float64).ravel()
        n = self.nx * self.ny
        if u.size != n or v.size != n:
            raise ValueError("flow components must have length nx*ny")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("flow components must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def stacked(self):
        """Concatenated (u, v) vector of length 2N."""
        return np.concatenate([self.u, self.v])


# ---------------------------------------------------------------------------
# PGM / PPM input and output
# ---------------------------------------------------------------------------


def _read_pgm_tokens(raw, count):
    """Pull `count` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset of the first byte after the final
    token's trailing whitespace character.
    """
    tokens = []
    pos = 0
    n = len(raw)
    while len(tokens) < count:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmError("truncated PGM header")
        tokens.append(raw[start:pos])
        if len(tokens) == count:
            if pos >= n:
                raise PgmError("truncated PGM file")
            pos += 1  # single whitespace after maxval precedes the raster
    return tokens, pos


def read_pgm(path):
    """Read a P5 (binary) or P2 (ASCII) PGM file with maxval 255."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc
    return parse_pgm(raw, source=str(path))


def parse_pgm(raw, source="<bytes>"):
    """Decode in-memory PGM data (P5 or P2, maxval 255)."""
    path = source
    if len(raw) < 2:
        raise PgmError(f"{path}: not a PGM file")
    magic = raw[:2]
    if magic not in (b"P5", b"P2"):
        raise PgmError(f"{path}: unsupported magic {magic!r}")
    tokens, offset = _read_pgm_tokens(raw[2:], 3)
    try:
        nx, ny, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise PgmError(f"{path}: malformed header") from exc
    if nx < 1 or ny < 1:
        raise PgmError(f"{path}: invalid dimensions {nx}x{ny}")
    if maxval != 255:
        raise PgmError(f"{path}: only maxval 255 is supported, got {maxval}")
    body = raw[2 + offset :]
    n = nx * ny
    if magic == b"P5":
        if len(body) < n:
            raise PgmError(f"{path}: truncated raster ({len(body)} of {n} bytes)")
        data = np.frombuffer(body[:n], dtype=np.uint8).astype(np.float64)
    else:
        values = body.split()
        if len(values) < n:
            raise PgmError(f"{path}: truncated raster ({len(values)} of {n} values)")
        try:
            data = np.array([int(v) for v in values[:n]], dtype=np.float64)
        except ValueError as exc:
            raise PgmError(f"{path}: non-numeric raster data") from exc
        if data.min() < 0 or data.max() > 255:
            raise PgmError(f"{path}: raster values outside [0, 255]")
    return Image(nx, ny, data)


def write_pgm(image, path):
    """Write a P5 PGM file; values are clamped to [0, 255] and rounded."""
    raster = np.clip(np.rint(image.data), 0, 255).astype(np.uint8)
    header = f"P5\n{image.nx} {image.ny}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(raster.tobytes())
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc


def read_mask(path):
    """Read a mask PGM: 255 marks mask pixels, 0 unknown ones."""
    img = read_pgm(path)
    ind = np.where(img.data >= 128.0, 1.0, 0.0)
    return Mask(img.nx, img.ny, ind)


def write_mask(mask, path):
    write_pgm(Image(mask.nx, mask.ny, mask.indicator * 255.0), path)


def write_ppm(rgb, nx, ny, path):
    """Write a P6 PPM file from an (N, 3) uint8 array."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.shape != (nx * ny, 3):
        raise ValueError("rgb must have shape (nx*ny, 3)")
    header = f"P6\n{nx} {ny}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(rgb.tobytes())
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Smoothing and derivatives
# ---------------------------------------------------------------------------


def gaussian_kernel(sigma):
    """Sampled 1-D Gaussian, truncated at radius ceil(3*sigma), unit sum."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return np.array([1.0])
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _mirror_indices(length, offsets):
    """Half-sample symmetric index map: -1 -> 0, length -> length-1, ..."""
    idx = offsets
    period = 2 * length
    idx = np.mod(idx, period)
    idx = np.where(idx >= length, period - 1 - idx, idx)
    return idx


def _convolve_axis(grid, kernel, axis):
    radius = (len(kernel) - 1) // 2
    if radius == 0:
        return grid * kernel[0]
    length = grid.shape[axis]
    out = np.zeros_like(grid)
    base = np.arange(length)
    for t, w in zip(range(-radius, radius + 1), kernel):
        idx = _mirror_indices(length, base + t)
        out += w * np.take(grid, idx, axis=axis)
    return out


def gaussian_convolve(image, sigma):
    """Convolve with a sampled Gaussian, mirrored at the boundaries.

    The kernel is truncated at radius ceil(3*sigma) and renormalised to unit
    sum, so the image sum is preserved exactly up to rounding. Applied
    separably along both axes.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return image
    kernel = gaussian_kernel(sigma)
    grid = image.as_grid()
    grid = _convolve_axis(grid, kernel, axis=1)
    grid = _convolve_axis(grid, kernel, axis=0)
    return Image.from_grid(grid)


def gradient(image):
    """Central differences with grid size 1 and mirrored boundaries.

    Mirroring duplicates the boundary value (u[-1] := u[0]), so at the
    boundary the stencil degenerates to a one-sided difference divided by
    two: a ramp f(i,j) = i has gx = 1 in the interior and 0.5 at the two
    vertical borders.
    """
    g = image.as_grid()
    gx = np.empty_like(g)
    gy = np.empty_like(g)
    gx[:, 1:-1] = 0.5 * (g[:, 2:] - g[:, :-2])
    gy[1:-1, :] = 0.5 * (g[2:, :] - g[:-2, :])
    if image.nx > 1:
        gx[:, 0] = 0.5 * (g[:, 1] - g[:, 0])
        gx[:, -1] = 0.5 * (g[:, -1] - g[:, -2])
    else:
        gx[:, 0] = 0.0
    if image.ny > 1:
        gy[0, :] = 0.5 * (g[1, :] - g[0, :])
        gy[-1, :] = 0.5 * (g[-1, :] - g[-2, :])
    else:
        gy[0, :] = 0.0
    return gx.ravel(), gy.ravel()


# ---------------------------------------------------------------------------
# Display rescaling and exports
# ---------------------------------------------------------------------------

LOG_RESCALE_BETA = 1e4  # keeps values spanning ~4 decades visible


def rescale_for_display(vectors, mode="joint-linear", beta=LOG_RESCALE_BETA):
    """Map raw value vectors to 8-bit rasters for display.

    Modes:
      joint-linear     -- one shared scale; the global maximum over all
                          inputs maps to 255 and 0 maps to 0.
      per-image-linear -- each vector is scaled by its own maximum.
      logarithmic      -- x -> log(1 + beta*|x|) / log(1 + beta*max),
                          with max shared over all inputs.

    Scaled values are floored into [0, 255], so e.g. 0.5 with a joint
    maximum of 1.0 renders as 127. All-zero input yields an all-zero raster.
    """
    if len(vectors) == 0:
        raise ValueError("need at least one vector")
    arrays = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    if mode == "joint-linear":
        peak = max(a.max(initial=0.0) for a in arrays)
        return [_linear_raster(a, peak) for a in arrays]
    if mode == "per-image-linear":
        return [_linear_raster(a, a.max(initial=0.0)) for a in arrays]
    if mode == "logarithmic":
        peak = max(np.abs(a).max(initial=0.0) for a in arrays)
        if peak <= 0.0:
            return [np.zeros(a.size, dtype=np.uint8) for a in arrays]
        denom = math.log1p(beta * peak)
        return [
            _floor_raster(np.log1p(beta * np.abs(a)) / denom * 255.0) for a in arrays
        ]
    raise ValueError(f"unknown rescale mode {mode!r}")


def _linear_raster(a, peak):
    if peak <= 0.0:
        return np.zeros(a.size, dtype=np.uint8)
    return _floor_raster(np.clip(a, 0.0, None) / peak * 255.0)


def _floor_raster(scaled):
    return np.floor(np.clip(scaled, 0.0, 255.0)).astype(np.uint8)


def write_csv_vector(vector, path):
    """Write a vector as CSV, one value per line."""
    np.savetxt(path, np.asarray(vector, dtype=np.float64).ravel(), fmt="%.17g")


def mark_location(raster, nx, ny, pixel, color=(255, 0, 0), others=(), other_color=(0, 255, 255)):
    """Turn an 8-bit raster into RGB with marker dots at pixel locations.

    `pixel` is an (i, j) pair painted in `color`; `others` is an iterable of
    further (i, j) pairs painted in `other_color` (used for mask pixels).
    """
    raster = np.asarray(raster, dtype=np.uint8).ravel()
    if raster.size != nx * ny:
        raise ValueError("raster length does not match grid")
    rgb = np.repeat(raster[:, None], 3, axis=1)
    markers = [(p, other_color) for p in others] + [(pixel, color)]
    for (i, j), col in markers:
        if not (0 <= i < nx and 0 <= j < ny):
            raise ValueError(f"marker ({i}, {j}) outside {nx}x{ny} grid")
        rgb[j * nx + i] = col
    return rgb

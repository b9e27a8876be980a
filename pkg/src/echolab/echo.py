"""Filter-agnostic echo extraction and reconstruction identities.

A source echo is the operator applied to a unit impulse (column i of the
state transition matrix), a drain echo is the adjoint applied to a unit
impulse (row j). Both carry metadata about the generating filter so
exports and UIs can label them. The reconstruction identities express the
filtered image as the f-weighted sum of source echoes and each output
pixel as an inner product with its drain echo.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EchoRequest",
    "EchoImage",
    "source_echo",
    "drain_echo",
    "echo_for_request",
    "cumulative_source_echo",
    "reconstruct_from_source",
    "reconstruct_pixel_from_drain",
    "segment_extract",
]

SEGMENT_THRESHOLD = 1e-6  # fraction of the echo maximum counted as support


@dataclass(frozen=True)
class EchoRequest:
    """A pixel coordinate plus echo direction; component picks the flow plane."""

    pixel: tuple
    direction: str = "source"
    component: str = "scalar"

    def __post_init__(self):
        if self.direction not in ("source", "drain"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.component not in ("scalar", "flow-u", "flow-v"):
            raise ValueError(f"unknown component {self.component!r}")


@dataclass(frozen=True)
class EchoImage:
    """Raw echo values (length N, or 2N for flow operators) plus metadata."""

    raw: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "raw", np.asarray(self.raw, dtype=np.float64).ravel())


def _unit_impulse(dim, i):
    if not 0 <= i < dim:
        raise ValueError(f"index {i} out of range for dimension {dim}")
    e = np.zeros(dim)
    e[i] = 1.0
    return e


def source_echo(op, i):
    """Column i of the state transition: the filtered unit impulse."""
    raw = op.apply(_unit_impulse(op.dim, i))
    return EchoImage(raw, {"direction": "source", "index": int(i), **op.meta})


def drain_echo(op, j):
    """Row j of the state transition: the local space-variant kernel."""
    raw = op.apply_adjoint(_unit_impulse(op.dim, j))
    return EchoImage(raw, {"direction": "drain", "index": int(j), **op.meta})


def echo_for_request(op, request, nx, ny):
    """Resolve an :class:`EchoRequest` against an operator on an nx-by-ny grid.

    For flow operators (dim 2N) the component selects whether the impulse
    is placed in the horizontal or vertical plane.
    """
    i, j = request.pixel
    if not (0 <= i < nx and 0 <= j < ny):
        raise ValueError(f"pixel {request.pixel} outside {nx}x{ny} grid")
    index = j * nx + i
    n = nx * ny
    if request.component == "flow-v":
        index += n
    if request.component != "scalar" and op.dim != 2 * n:
        raise ValueError("flow components require an operator of dimension 2N")
    echo = source_echo(op, index) if request.direction == "source" else drain_echo(op, index)
    return EchoImage(echo.raw, {**echo.meta, "request": request})


def cumulative_source_echo(op, indices):
    """Sum of the source echoes over a pixel set (joint information flow)."""
    indices = list(indices)
    if not indices:
        raise ValueError("need at least one pixel index")
    total = np.zeros(op.dim)
    for i in indices:
        total += source_echo(op, i).raw
    return EchoImage(total, {"direction": "source", "indices": indices, **op.meta})


def reconstruct_from_source(op, f):
    """Rebuild the filtered image as the f-weighted sum of all source echoes.

    This is the slow oracle path: one operator application per pixel.
    """
    f = np.asarray(f, dtype=np.float64).ravel()
    scaled_impulses = np.diag(f)
    return op.apply(scaled_impulses).sum(axis=1)


def reconstruct_pixel_from_drain(op, f, j):
    """Single output value u_j as the drain echo's inner product with f."""
    f = np.asarray(f, dtype=np.float64).ravel()
    return float(drain_echo(op, j).raw @ f)


def segment_extract(frozen, i, threshold=SEGMENT_THRESHOLD):
    """Support mask of a source echo: the segment a pixel diffuses into.

    Intended for evolutions whose diffusivity shuts down across segment
    borders (Weickert diffusivity, long stopping times); the echo is
    thresholded at `threshold` times its maximum.
    """
    op = frozen.as_operator()
    echo = source_echo(op, i)
    peak = np.abs(echo.raw).max()
    support = (np.abs(echo.raw) > threshold * peak).astype(np.float64) if peak > 0 else np.zeros_like(echo.raw)
    return EchoImage(support, {**echo.meta, "segment_of": int(i), "threshold": threshold})

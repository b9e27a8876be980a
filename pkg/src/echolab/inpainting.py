"""Sparse diffusion-based inpainting with mask-supported echo structure.

Known pixels (the mask) stay fixed while an elliptic operator fills the
unknown area, merged into the single system

    (C - (I - C) L) u = C f,        C = diag(mask).

For a linear operator this is one nonsymmetric solve. Nonlinear operators
either run a Kacanov fixed point (freeze the diffusivity, re-solve) or, as
the default for the anisotropic case, march a parabolic evolution with a
doubling step size to its steady state. Either way only the final frozen
coefficient field matters, so :class:`FrozenInpainting` reproduces the
state transition exactly: source echoes vanish at non-mask pixels and
drain echoes live on the mask by construction.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .diffusion import Diffusivity, assemble_eed, assemble_isotropic
from .grid import Image, Mask
from .linsolve import LinearOperator, bicgstab_solve, DEFAULT_TOL

__all__ = [
    "InpaintConfig",
    "FrozenInpainting",
    "inpaint",
    "inpaint_S",
    "cumulative_echo_set",
    "random_mask",
]

PARABOLIC_TAU_CAP = 1e6


@dataclass(frozen=True)
class InpaintConfig:
    """Inpainting operator choice and iteration controls."""

    operator: str = "homogeneous"
    diffusivity: Diffusivity | None = None
    sigma: float = 0.0
    mode: str = "parabolic"
    tolerance: float = 1e-8
    max_outer: int = 200

    def __post_init__(self):
        if self.operator not in ("homogeneous", "isotropic_nonlinear", "eed"):
            raise ValueError(f"unknown inpainting operator {self.operator!r}")
        if self.operator != "homogeneous" and self.diffusivity is None:
            raise ValueError(f"{self.operator} inpainting needs a diffusivity")
        if self.mode not in ("elliptic_kacanov", "parabolic"):
            raise ValueError(f"unknown inpainting mode {self.mode!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


def random_mask(nx, ny, count, seed=0):
    """Uniform mask sampling without replacement (seeded)."""
    n = nx * ny
    if not 1 <= count <= n:
        raise ValueError("mask pixel count out of range")
    rng = np.random.Generator(np.random.Philox(seed))
    return Mask.from_indices(nx, ny, rng.choice(n, size=count, replace=False))


def _assemble_L(u, cfg):
    if cfg.operator == "homogeneous":
        return assemble_isotropic(u)
    if cfg.operator == "isotropic_nonlinear":
        return assemble_isotropic(u, cfg.diffusivity, cfg.sigma)
    return assemble_eed(u, cfg.diffusivity, cfg.sigma)


def _system_matrix(mask, L):
    c = mask.indicator
    C = sp.diags(c)
    return (C - sp.diags(1.0 - c) @ L).tocsr()


@dataclass
class FrozenInpainting:
    """Mask plus the final frozen operator; rebuilds the exact linear system."""

    mask: Mask
    L: sp.csr_matrix
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        self._matrix = _system_matrix(self.mask, self.L)
        self._matrix_t = self._matrix.T.tocsr()
        self._mask_idx = self.mask.pixel_indices()

    @property
    def n(self):
        return self.mask.n

    def apply(self, v):
        """Solve (C - (I-C)L) x = C v; exact zero for off-mask impulses."""
        v = np.asarray(v, dtype=np.float64)
        rhs = v * self.mask.indicator if v.ndim == 1 else v * self.mask.indicator[:, None]
        x = bicgstab_solve(self._matrix, rhs, tol=self.tol)
        # mask rows of the system are identities; pin them against solver noise
        x[self._mask_idx] = v[self._mask_idx]
        return x

    def apply_adjoint(self, v):
        """Solve the transposed system, then restrict to the mask."""
        v = np.asarray(v, dtype=np.float64)
        y = bicgstab_solve(self._matrix_t, v, tol=self.tol)
        return y * self.mask.indicator if y.ndim == 1 else y * self.mask.indicator[:, None]

    def as_operator(self):
        return LinearOperator(self.n, self.apply, self.apply_adjoint, {"filter": "inpainting"})


def inpaint(f, mask, cfg=InpaintConfig(), tol=DEFAULT_TOL):
    """Inpaint f from the mask pixels; returns (result, frozen transition).

    Homogeneous: a single linear solve. Nonlinear elliptic (Kacanov): the
    diffusivity is frozen on the current solution, the linear problem
    re-solved until the relative update drops below cfg.tolerance.
    Parabolic: semi-implicit steps with mask projection after each step and
    a step size doubling from 1 (capped at 1e6) until the relative change
    per unit time falls below cfg.tolerance. The returned image is the
    solve with the final frozen operator, so frozen.apply(f) reproduces it.
    """
    if f.nx != mask.nx or f.ny != mask.ny:
        raise ValueError("image and mask dimensions differ")
    idx = mask.pixel_indices()
    if idx.size == 0:
        raise ValueError("mask must contain at least one pixel")

    if cfg.operator == "homogeneous":
        L = _assemble_L(f, cfg)
    elif cfg.mode == "elliptic_kacanov":
        L = _kacanov_final_operator(f, mask, cfg, tol)
    else:
        L = _parabolic_final_operator(f, mask, cfg, tol)

    frozen = FrozenInpainting(mask, L, tol)
    u = frozen.apply(f.data)
    return Image(f.nx, f.ny, u), frozen


def _kacanov_final_operator(f, mask, cfg, tol):
    u = f.data * mask.indicator  # any init with C u = C f is admissible
    L = None
    for _ in range(cfg.max_outer):
        L = _assemble_L(Image(f.nx, f.ny, u), cfg)
        m = _system_matrix(mask, L)
        u_new = bicgstab_solve(m, f.data * mask.indicator, tol=tol, x0=u)
        change = np.linalg.norm(u_new - u) / max(np.linalg.norm(u_new), 1e-300)
        u = u_new
        if change < cfg.tolerance:
            break
    return L


def _parabolic_final_operator(f, mask, cfg, tol):
    c = mask.indicator
    idx = mask.pixel_indices()
    n = f.n
    u = f.data * c
    tau = 1.0
    for _ in range(cfg.max_outer):
        L = _assemble_L(Image(f.nx, f.ny, u), cfg)
        # semi-implicit step of du/dt = (1-c) L u - c (u - f), then projection
        m = (sp.identity(n, format="csr") + tau * sp.diags(c) - tau * sp.diags(1.0 - c) @ L).tocsr()
        rhs = u + tau * c * f.data
        u_new = bicgstab_solve(m, rhs, tol=tol, x0=u)
        u_new[idx] = f.data[idx]
        change = np.linalg.norm(u_new - u) / (tau * max(np.linalg.norm(u_new), 1e-300))
        u = u_new
        if change < cfg.tolerance:
            break
        tau = min(2.0 * tau, PARABOLIC_TAU_CAP)
    return _assemble_L(Image(f.nx, f.ny, u), cfg)


def inpaint_S(frozen):
    """State transition of a frozen inpainting problem."""
    return frozen.as_operator()


def cumulative_echo_set(frozen, pixels):
    """Sum of the source echoes of the listed mask pixels.

    The echoes are extracted as a block of unit impulses (the block solver
    iterates columns independently, so each column equals its solo echo)
    and summed, keeping the cumulative echo additive over disjoint sets.
    Listing a non-mask pixel is an error: its echo would be identically zero.
    """
    pixels = np.asarray(list(pixels), dtype=int)
    if pixels.size == 0:
        raise ValueError("need at least one mask pixel")
    on_mask = frozen.mask.indicator[pixels] > 0.5
    if not np.all(on_mask):
        raise ValueError(f"pixels {pixels[~on_mask].tolist()} are not on the mask")
    impulses = np.zeros((frozen.n, pixels.size))
    impulses[pixels, np.arange(pixels.size)] = 1.0
    return frozen.apply(impulses).sum(axis=1)

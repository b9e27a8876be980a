"""Linear variational optic flow as a transition acting on the normal flow.

Horn-Schunck and Nagel-Enkelmann estimate the motion between two frames by
solving the symmetric 2N-by-2N Euler-Lagrange system

    B (u; v) = (-fx ft; -fy ft),
    B = [[diag(fx^2) - alpha L, diag(fx fy)],
         [diag(fx fy),          diag(fy^2) - alpha L]],

where L discretises div(D grad .) with D = I (HS) or the Nagel-Enkelmann
tensor that only smooths orthogonally to the image gradient. Writing the
right-hand side through the regularised normal flow exposes the state
transition S = B^{-1} diag(fx^2 + fy^2 + eps^2): it maps the normal flow
to the final flow field, and the diagonal factor makes it nonsymmetric.
Echoes are 2N vectors, one plane per flow component.

Frame derivatives here use full one-sided differences at the borders so
that linear image content yields exact constant derivative fields; the
mirrored convention of :func:`echolab.grid.gradient` would halve them at
the border and perturb the translating-ramp identities.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .diffusion import assemble_isotropic, assemble_tensor
from .grid import FlowField, write_ppm
from .linsolve import LinearOperator, cg_solve, DEFAULT_TOL

__all__ = [
    "FlowConfig",
    "FlowSystem",
    "frame_derivatives",
    "normal_flow",
    "assemble_flow_system",
    "solve_flow",
    "flow_S",
    "flow_to_csv",
    "flow_color_raster",
    "write_flow_ppm",
]

DEFAULT_EPSILON = 0.255  # 1e-3 of the [0, 255] grey range


@dataclass(frozen=True)
class FlowConfig:
    """Regulariser choice and weights for the flow system."""

    regularizer: str = "horn_schunck"
    alpha: float = 100.0
    ne_lambda: float = 1.0
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.regularizer not in ("horn_schunck", "nagel_enkelmann"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if not (self.alpha > 0 and self.ne_lambda > 0 and self.epsilon > 0):
            raise ValueError("alpha, ne_lambda and epsilon must be positive")


def _frame_gradient(grid):
    """Central differences, full one-sided at the borders (exact for ramps)."""
    gy, gx = np.gradient(grid)
    return gx.ravel(), gy.ravel()


def frame_derivatives(f1, f2):
    """Spatial derivatives of the frame average and the temporal difference."""
    if (f1.nx, f1.ny) != (f2.nx, f2.ny):
        raise ValueError("frames must have equal dimensions")
    avg = 0.5 * (f1.as_grid() + f2.as_grid())
    fx, fy = _frame_gradient(avg)
    ft = f2.data - f1.data
    return fx, fy, ft


def normal_flow(fx, fy, ft, epsilon=DEFAULT_EPSILON):
    """Regularised normal flow -ft grad(f) / (|grad f|^2 + eps^2).

    epsilon = 0 is tolerated; pixels with vanishing gradient then return a
    zero flow vector instead of a singularity.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    fx = np.asarray(fx, dtype=np.float64).ravel()
    fy = np.asarray(fy, dtype=np.float64).ravel()
    ft = np.asarray(ft, dtype=np.float64).ravel()
    denom = fx * fx + fy * fy + epsilon * epsilon
    scale = np.where(denom > 0.0, -ft / np.where(denom > 0.0, denom, 1.0), 0.0)
    return scale * fx, scale * fy


@dataclass
class FlowSystem:
    """Assembled symmetric system plus the derivative fields it was built from."""

    nx: int
    ny: int
    fx: np.ndarray
    fy: np.ndarray
    matrix: sp.csr_matrix
    config: FlowConfig

    @property
    def n(self):
        return self.nx * self.ny

    def data_diagonal(self):
        """diag(fx^2 + fy^2 + eps^2), the normal-flow weighting."""
        return self.fx**2 + self.fy**2 + self.config.epsilon**2


def _ne_tensor(gx, gy, lam):
    denom = gx * gx + gy * gy + 2.0 * lam * lam
    d11 = (gy * gy + lam * lam) / denom
    d12 = -gx * gy / denom
    d22 = (gx * gx + lam * lam) / denom
    return d11, d12, d22


def assemble_flow_system(fx, fy, f1, cfg=FlowConfig()):
    """Build B from the derivative fields and the reference frame.

    The Nagel-Enkelmann tensor uses the unsmoothed gradient of the
    reference frame; Horn-Schunck uses the homogeneous Laplacian.
    """
    fx = np.asarray(fx, dtype=np.float64).ravel()
    fy = np.asarray(fy, dtype=np.float64).ravel()
    nx, ny = f1.nx, f1.ny
    if cfg.regularizer == "horn_schunck":
        lap = assemble_isotropic(f1)
    else:
        gx, gy = _frame_gradient(f1.as_grid())
        lap = assemble_tensor(nx, ny, *_ne_tensor(gx, gy, cfg.ne_lambda))
    smooth = -cfg.alpha * lap
    b = sp.bmat(
        [
            [sp.diags(fx * fx) + smooth, sp.diags(fx * fy)],
            [sp.diags(fx * fy), sp.diags(fy * fy) + smooth],
        ],
        format="csr",
    )
    return FlowSystem(nx, ny, fx, fy, b, cfg)


def solve_flow(system, ft, tol=DEFAULT_TOL):
    """Solve the Euler-Lagrange system for the flow field."""
    ft = np.asarray(ft, dtype=np.float64).ravel()
    rhs = np.concatenate([-system.fx * ft, -system.fy * ft])
    w = cg_solve(system.matrix, rhs, tol=tol)
    n = system.n
    return FlowField(system.nx, system.ny, w[:n], w[n:])


def flow_S(system, tol=DEFAULT_TOL):
    """State transition S = B^{-1} diag(fx^2+fy^2+eps^2) on stacked (u; v).

    Applied to the regularised normal flow it reproduces
    :func:`solve_flow`; the adjoint applies the diagonal after the solve.
    """
    g = system.data_diagonal()
    g2 = np.concatenate([g, g])
    matrix = system.matrix

    def apply(v):
        scaled = v * g2 if v.ndim == 1 else v * g2[:, None]
        return cg_solve(matrix, scaled, tol=tol)

    def apply_adjoint(v):
        y = cg_solve(matrix, v, tol=tol)
        return y * g2 if y.ndim == 1 else y * g2[:, None]

    return LinearOperator(2 * system.n, apply, apply_adjoint,
                          {"filter": "opticflow", "config": system.config})


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def flow_to_csv(flow, path):
    """Write rows i,j,u,v for every pixel."""
    jj, ii = np.mgrid[0 : flow.ny, 0 : flow.nx]
    table = np.column_stack([ii.ravel(), jj.ravel(), flow.u, flow.v])
    np.savetxt(path, table, fmt=["%d", "%d", "%.17g", "%.17g"], delimiter=",")


def flow_color_raster(flow):
    """Colour-code a flow field: hue from direction, value from magnitude.

    Magnitudes are normalised by their 0.99 quantile so single outliers do
    not darken the rest of the field. Returns an (N, 3) uint8 array.
    """
    mag = np.hypot(flow.u, flow.v)
    scale = np.quantile(mag, 0.99)
    norm = np.clip(mag / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(mag)
    hue = (np.arctan2(flow.v, flow.u) / (2.0 * np.pi)) % 1.0
    h6 = hue * 6.0
    k = np.floor(h6).astype(int) % 6
    frac = h6 - np.floor(h6)
    v = np.ones_like(norm)
    p = 1.0 - norm
    q = 1.0 - norm * frac
    t = 1.0 - norm * (1.0 - frac)
    r = np.choose(k, [v, q, p, p, t, v])
    g = np.choose(k, [t, v, v, q, p, p])
    b = np.choose(k, [p, p, t, v, v, q])
    return np.clip(np.column_stack([r, g, b]) * 255.0, 0, 255).astype(np.uint8)


def write_flow_ppm(flow, path):
    write_ppm(flow_color_raster(flow), flow.nx, flow.ny, path)

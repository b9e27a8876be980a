"""Linear osmosis: a drift-diffusion evolution with nonconstant steady state.

The operator discretises div(grad u - d u) on a staggered grid: diffusion
uses the homogeneous 5-point stencil, the drift flux at each half-grid
point multiplies the arithmetic mean of the two adjacent pixels. The drift
field stores logarithmic guidance differences; assembly converts each
half-grid value d to the flux coefficient 2*tanh(d/2), which equals
2(v_q - v_p)/(v_q + v_p) for compatible drift, so the guidance itself is
an exact discrete steady state (A v = 0), column sums vanish exactly, and
off-diagonals stay nonnegative for any drift magnitude.

Implicit steps u^{k+1} = (I - tau A)^{-1} u^k preserve the total grey
value (unit column sums) and positivity. Iterating to the steady state
collapses the transition to rank one: all source echoes coincide with the
rescaled steady state and every drain echo is constant.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import Image
from .linsolve import LinearOperator, bicgstab_solve, DEFAULT_TOL

__all__ = [
    "DriftField",
    "OsmosisConfig",
    "SteadyStateReport",
    "drift_from_guidance",
    "assemble_osmosis",
    "osmosis_evolve",
    "osmosis_S",
    "steady_state_echo_check",
]

STEADY_TAU = 1000.0
STEADY_TOL = 1e-10


@dataclass(frozen=True)
class DriftField:
    """Drift values at half-grid points: d1 between horizontal neighbours
    ((nx-1)*ny values), d2 between vertical neighbours (nx*(ny-1))."""

    nx: int
    ny: int
    d1: np.ndarray
    d2: np.ndarray

    def __post_init__(self):
        d1 = np.asarray(self.d1, dtype=np.float64).ravel()
        d2 = np.asarray(self.d2, dtype=np.float64).ravel()
        if d1.size != (self.nx - 1) * self.ny or d2.size != self.nx * (self.ny - 1):
            raise ValueError("drift component sizes do not match the grid")
        if not (np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))):
            raise ValueError("drift values must be finite")
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d2)

    @classmethod
    def zero(cls, nx, ny):
        return cls(nx, ny, np.zeros((nx - 1) * ny), np.zeros(nx * (ny - 1)))


@dataclass(frozen=True)
class OsmosisConfig:
    """Implicit stepping controls; steady mode iterates to convergence."""

    tau: float = STEADY_TAU
    steps: int = 0
    steady: bool = True
    tolerance: float = STEADY_TOL

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not self.steady and self.steps == 0:
            raise ValueError("need steps > 0 unless running to the steady state")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


def drift_from_guidance(v):
    """Compatible drift field: logarithmic finite differences of the guidance."""
    if np.any(v.data <= 0.0):
        raise ValueError("guidance image must be strictly positive")
    lv = np.log(v.as_grid())
    d1 = lv[:, 1:] - lv[:, :-1]
    d2 = lv[1:, :] - lv[:-1, :]
    return DriftField(v.nx, v.ny, d1.ravel(), d2.ravel())


def assemble_osmosis(d):
    """Osmosis matrix with zero column sums and nonnegative off-diagonals."""
    nx, ny = d.nx, d.ny
    n = nx * ny
    rows, cols, vals = [], [], []
    diag = np.zeros(n)

    def add_halfpoints(p, q, delta):
        # flux (u_q - u_p) - delta (u_p + u_q)/2 entering row p, leaving row q
        half = 0.5 * delta
        rows.append(p)
        cols.append(q)
        vals.append(1.0 - half)
        rows.append(q)
        cols.append(p)
        vals.append(1.0 + half)
        np.add.at(diag, p, -1.0 - half)
        np.add.at(diag, q, -1.0 + half)

    if nx > 1:
        jj, ii = np.mgrid[0:ny, 0 : nx - 1]
        p = (jj * nx + ii).ravel()
        add_halfpoints(p, p + 1, 2.0 * np.tanh(0.5 * d.d1))
    if ny > 1:
        jj, ii = np.mgrid[0 : ny - 1, 0:nx]
        p = (jj * nx + ii).ravel()
        add_halfpoints(p, p + nx, 2.0 * np.tanh(0.5 * d.d2))

    rows = np.concatenate(rows + [np.arange(n)])
    cols = np.concatenate(cols + [np.arange(n)])
    vals = np.concatenate(vals + [diag])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


class _OsmosisTransition:
    """Fixed number of implicit steps of a given osmosis matrix."""

    def __init__(self, a, tau, steps, tol=DEFAULT_TOL):
        n = a.shape[0]
        self.steps = steps
        self.tol = tol
        self.m = (sp.identity(n, format="csr") - tau * a).tocsr()
        self.m_t = self.m.T.tocsr()

    def apply(self, v):
        x = np.asarray(v, dtype=np.float64)
        for _ in range(self.steps):
            x = bicgstab_solve(self.m, x, tol=self.tol)
        return x

    def apply_adjoint(self, v):
        x = np.asarray(v, dtype=np.float64)
        for _ in range(self.steps):
            x = bicgstab_solve(self.m_t, x, tol=self.tol)
        return x


def _steady_step_count(m, n, tolerance, tol):
    """Steps until a positive probe stops changing, plus safety margin."""
    x = np.ones(n)
    for k in range(1, 10_000):
        x_new = bicgstab_solve(m, x, tol=tol)
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x_new), 1e-300)
        x = x_new
        if change < tolerance:
            return k + 2
    raise RuntimeError("osmosis steady state did not converge")


def osmosis_S(d, cfg=OsmosisConfig(), tol=DEFAULT_TOL):
    """State transition P^n (or its steady-state limit) as an operator.

    In steady mode the step count is frozen from a positive probe's
    convergence at construction, keeping the operator linear and
    deterministic.
    """
    a = assemble_osmosis(d)
    n = a.shape[0]
    m = (sp.identity(n, format="csr") - cfg.tau * a).tocsr()
    steps = cfg.steps
    if cfg.steady:
        steps = _steady_step_count(m, n, cfg.tolerance, tol)
    trans = _OsmosisTransition(a, cfg.tau, steps, tol)
    return LinearOperator(n, trans.apply, trans.apply_adjoint,
                          {"filter": "osmosis", "steps": steps, "tau": cfg.tau})


def osmosis_evolve(f, d, cfg=OsmosisConfig(), tol=DEFAULT_TOL):
    """Evolve a positive image by n implicit steps or to the steady state."""
    if np.any(f.data <= 0.0):
        raise ValueError("osmosis requires a strictly positive initial image")
    if (f.nx, f.ny) != (d.nx, d.ny):
        raise ValueError("image and drift dimensions differ")
    a = assemble_osmosis(d)
    m = (sp.identity(f.n, format="csr") - cfg.tau * a).tocsr()
    u = f.data.copy()
    if cfg.steady:
        for _ in range(10_000):
            u_new = bicgstab_solve(m, u, tol=tol)
            change = np.linalg.norm(u_new - u) / max(np.linalg.norm(u_new), 1e-300)
            u = u_new
            if change < cfg.tolerance:
                break
        else:
            raise RuntimeError("osmosis steady state did not converge")
    else:
        for _ in range(cfg.steps):
            u = bicgstab_solve(m, u, tol=tol)
    return Image(f.nx, f.ny, u)


@dataclass(frozen=True)
class SteadyStateReport:
    """Verification summary of the rank-1 steady-state echo structure."""

    source_echo: np.ndarray
    drain_constants: np.ndarray
    max_source_deviation: float
    max_drain_variation: float
    steps: int


def steady_state_echo_check(d, cfg=OsmosisConfig(), tol=DEFAULT_TOL):
    """Verify that all steady-state source echoes coincide and drain echoes
    are constant; returns the common echo and the drain constants.

    The common source echo is the rescaled steady state (unit sum); the
    drain constant of pixel j equals the j-th entry of that echo.
    """
    if not cfg.steady:
        raise ValueError("echo check requires steady-state mode")
    op = osmosis_S(d, cfg, tol)
    n = op.dim
    s = op.apply(np.eye(n))
    common = s.mean(axis=1)
    max_source_dev = float(np.max(np.abs(s - common[:, None])))
    st = op.apply_adjoint(np.eye(n))
    drain_constants = st.mean(axis=0)
    max_drain_var = float(np.max(st.max(axis=0) - st.min(axis=0)))
    if max_source_dev > 1e-6:
        raise RuntimeError(f"source echoes deviate by {max_source_dev:.3e}")
    return SteadyStateReport(common, drain_constants, max_source_dev,
                             max_drain_var, op.meta["steps"])

"""Diffusion filters as semi-implicit evolutions with replayable steps.

Homogeneous, isotropic nonlinear, and edge-enhancing anisotropic (EED)
diffusion are discretised in space with symmetric stencils that have
vanishing row sums and reflecting boundaries, and in time with the
semi-implicit scheme: each step freezes the nonlinearity and solves

    (I - tau * A(u^k)) u^{k+1} = u^k.

The per-step coefficient fields (a scalar diffusivity field for isotropic
models, three tensor entry fields for EED) are cached in a
:class:`FrozenEvolution`, which makes the evolution a reproducible linear
map: the state transition applies the step solves in evolution order, its
adjoint applies the same symmetric steps in reverse order.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import Image, gaussian_convolve, gradient
from .linsolve import LinearOperator, cg_solve, DEFAULT_TOL

__all__ = [
    "Diffusivity",
    "DiffusionConfig",
    "FrozenEvolution",
    "diffusivity_eval",
    "assemble_isotropic",
    "assemble_eed",
    "assemble_tensor",
    "evolve",
    "apply_S",
    "apply_S_adjoint",
]

WEICKERT_C = 3.3148

DIFFUSIVITY_KINDS = ("charbonnier", "rational_perona_malik", "weickert")

# matrices are cached per step while the total estimated footprint stays
# below this budget; beyond it they are rebuilt from the coefficient fields
_CACHE_BUDGET_BYTES = 512 * 2**20


@dataclass(frozen=True)
class Diffusivity:
    """Scalar diffusivity g(s^2) with contrast parameter lam > 0."""

    kind: str
    lam: float

    def __post_init__(self):
        if self.kind not in DIFFUSIVITY_KINDS:
            raise ValueError(f"unknown diffusivity kind {self.kind!r}")
        if not self.lam > 0:
            raise ValueError("contrast parameter must be positive")

    def __call__(self, s2):
        return diffusivity_eval(self, s2)


def diffusivity_eval(g, s2):
    """Evaluate a diffusivity on squared gradient magnitudes.

    charbonnier:            1 / sqrt(1 + s^2/lam^2)
    rational_perona_malik:  1 / (1 + s^2/lam^2)
    weickert:               1 - exp(-3.3148 / (s^2/lam^2)^4), 1 at s^2 = 0
    """
    s2 = np.asarray(s2, dtype=np.float64)
    if np.any(s2 < 0):
        raise ValueError("squared gradient magnitude must be nonnegative")
    ratio = s2 / (g.lam * g.lam)
    if g.kind == "charbonnier":
        return 1.0 / np.sqrt(1.0 + ratio)
    if g.kind == "rational_perona_malik":
        return 1.0 / (1.0 + ratio)
    # weickert: the exponent decays so fast that underflow to 1.0 is the
    # correct continuation of the s^2 -> 0 limit
    with np.errstate(divide="ignore", over="ignore"):
        val = 1.0 - np.exp(-WEICKERT_C / ratio**4)
    return np.where(s2 == 0.0, 1.0, val)


@dataclass(frozen=True)
class DiffusionConfig:
    """Parameters of a diffusion evolution; stopping time T = tau * steps."""

    model: str = "homogeneous"
    diffusivity: Diffusivity | None = None
    sigma: float = 0.0
    tau: float = 5.0
    steps: int = 1

    def __post_init__(self):
        if self.model not in ("homogeneous", "isotropic_nonlinear", "eed"):
            raise ValueError(f"unknown diffusion model {self.model!r}")
        if self.model != "homogeneous" and self.diffusivity is None:
            raise ValueError(f"{self.model} diffusion needs a diffusivity")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")

    @property
    def stopping_time(self):
        return self.tau * self.steps


# ---------------------------------------------------------------------------
# Space discretisation
# ---------------------------------------------------------------------------


class _StencilBuilder:
    """Accumulates symmetric neighbour couplings and the zero-row-sum diagonal."""

    def __init__(self, nx, ny):
        self.nx, self.ny = nx, ny
        self.rows, self.cols, self.vals = [], [], []
        self.diag = np.zeros(nx * ny)

    def couple(self, p, q, w):
        """Add entries A[p,q] = A[q,p] = w and subtract w from both diagonals."""
        self.rows.append(p)
        self.cols.append(q)
        self.rows.append(q)
        self.cols.append(p)
        self.vals.append(w)
        self.vals.append(w)
        np.subtract.at(self.diag, p, w)
        np.subtract.at(self.diag, q, w)

    def to_csr(self):
        n = self.nx * self.ny
        rows = np.concatenate(self.rows + [np.arange(n)])
        cols = np.concatenate(self.cols + [np.arange(n)])
        vals = np.concatenate(self.vals + [self.diag])
        return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _couple_axial(builder, weights_h, weights_v):
    nx, ny = builder.nx, builder.ny
    if nx > 1:
        jj, ii = np.mgrid[0:ny, 0 : nx - 1]
        p = (jj * nx + ii).ravel()
        builder.couple(p, p + 1, weights_h.ravel())
    if ny > 1:
        jj, ii = np.mgrid[0 : ny - 1, 0:nx]
        p = (jj * nx + ii).ravel()
        builder.couple(p, p + nx, weights_v.ravel())


def _node_diffusivity(u, diffusivity, sigma):
    u_sigma = gaussian_convolve(u, sigma)
    gx, gy = gradient(u_sigma)
    return diffusivity_eval(diffusivity, gx * gx + gy * gy)


def assemble_isotropic(u, diffusivity=None, sigma=0.0):
    """5-point stencil for div(g grad u) with reflecting boundaries.

    The diffusivity is evaluated on |grad u_sigma|^2 at the nodes and
    averaged arithmetically onto the half-grid; passing no diffusivity
    yields the homogeneous Laplacian. The result is symmetric with zero
    row sums and nonnegative off-diagonals.
    """
    nx, ny = u.nx, u.ny
    if diffusivity is None:
        g_field = np.ones(nx * ny)
    else:
        g_field = _node_diffusivity(u, diffusivity, sigma)
    return _assemble_isotropic_from_field(nx, ny, g_field)


def _assemble_isotropic_from_field(nx, ny, g_field):
    g = g_field.reshape(ny, nx)
    builder = _StencilBuilder(nx, ny)
    wh = 0.5 * (g[:, :-1] + g[:, 1:]) if nx > 1 else np.zeros((ny, 0))
    wv = 0.5 * (g[:-1, :] + g[1:, :]) if ny > 1 else np.zeros((0, nx))
    _couple_axial(builder, wh, wv)
    return builder.to_csr()


def assemble_tensor(nx, ny, d11, d12, d22):
    """9-point stencil for div(D grad u) with a per-pixel symmetric tensor.

    Axial couplings average the diagonal tensor entries onto the half-grid;
    the mixed-derivative part couples diagonal neighbours with weights
    averaged over the two adjacent nodes. Symmetric, zero row sums.
    """
    a = np.asarray(d11, dtype=np.float64).reshape(ny, nx)
    b = np.asarray(d12, dtype=np.float64).reshape(ny, nx)
    c = np.asarray(d22, dtype=np.float64).reshape(ny, nx)

    builder = _StencilBuilder(nx, ny)
    wh = 0.5 * (a[:, :-1] + a[:, 1:]) if nx > 1 else np.zeros((ny, 0))
    wv = 0.5 * (c[:-1, :] + c[1:, :]) if ny > 1 else np.zeros((0, nx))
    _couple_axial(builder, wh, wv)

    if nx > 1 and ny > 1:
        # (i, j) <-> (i+1, j+1), weight (b(i+1, j) + b(i, j+1)) / 4
        jj, ii = np.mgrid[0 : ny - 1, 0 : nx - 1]
        p = (jj * nx + ii).ravel()
        w = 0.25 * (b[jj, ii + 1] + b[jj + 1, ii]).ravel()
        builder.couple(p, p + nx + 1, w)
        # (i, j) <-> (i+1, j-1), weight -(b(i+1, j) + b(i, j-1)) / 4
        jj, ii = np.mgrid[1:ny, 0 : nx - 1]
        p = (jj * nx + ii).ravel()
        w = -0.25 * (b[jj, ii + 1] + b[jj - 1, ii]).ravel()
        builder.couple(p, p - nx + 1, w)

    return builder.to_csr()


def _eed_tensor(u, diffusivity, sigma):
    u_sigma = gaussian_convolve(u, sigma)
    gx, gy = gradient(u_sigma)
    m2 = gx * gx + gy * gy
    g_val = diffusivity_eval(diffusivity, m2)
    safe = np.where(m2 > 0.0, m2, 1.0)
    d11 = np.where(m2 > 0.0, (g_val * gx * gx + gy * gy) / safe, 1.0)
    d12 = np.where(m2 > 0.0, (g_val - 1.0) * gx * gy / safe, 0.0)
    d22 = np.where(m2 > 0.0, (g_val * gy * gy + gx * gx) / safe, 1.0)
    return d11, d12, d22


def assemble_eed(u, diffusivity, sigma=0.0):
    """Edge-enhancing diffusion matrix: eigenvalue g across, 1 along edges.

    The tensor is built from the smoothed gradient direction; a vanishing
    gradient yields the identity tensor (both eigenvalues 1).
    """
    d11, d12, d22 = _eed_tensor(u, diffusivity, sigma)
    return assemble_tensor(u.nx, u.ny, d11, d12, d22)


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------


def _step_fields(u, config):
    if config.model == "homogeneous":
        return None
    if config.model == "isotropic_nonlinear":
        return _node_diffusivity(u, config.diffusivity, config.sigma)
    return _eed_tensor(u, config.diffusivity, config.sigma)


def _matrix_from_fields(nx, ny, config, fields):
    if config.model == "homogeneous":
        a = _assemble_isotropic_from_field(nx, ny, np.ones(nx * ny))
    elif config.model == "isotropic_nonlinear":
        a = _assemble_isotropic_from_field(nx, ny, fields)
    else:
        a = assemble_tensor(nx, ny, *fields)
    n = nx * ny
    return (sp.identity(n, format="csr") - config.tau * a).tocsr()


@dataclass
class FrozenEvolution:
    """Cached per-step coefficients that replay a diffusion evolution.

    Immutable after :func:`evolve`; apply/apply_adjoint may be called
    concurrently and accept vectors or column blocks.
    """

    nx: int
    ny: int
    config: DiffusionConfig
    step_fields: list
    final: np.ndarray
    tol: float = DEFAULT_TOL
    _matrices: list = field(default=None, repr=False, compare=False)

    @property
    def n(self):
        return self.nx * self.ny

    def final_image(self):
        return Image(self.nx, self.ny, self.final)

    def _cached_matrices(self):
        if self._matrices is None:
            per_step = self.n * (15 if self.config.model == "eed" else 7) * 16
            if per_step * max(len(self.step_fields), 1) <= _CACHE_BUDGET_BYTES:
                self._matrices = [
                    _matrix_from_fields(self.nx, self.ny, self.config, f)
                    for f in self.step_fields
                ]
        return self._matrices

    def _step_matrices(self, reverse=False):
        cached = self._cached_matrices()
        if cached is not None:
            return reversed(cached) if reverse else cached
        fields = reversed(self.step_fields) if reverse else self.step_fields
        return (_matrix_from_fields(self.nx, self.ny, self.config, f) for f in fields)

    def apply(self, v):
        """Multiply by the state transition: step solves in evolution order."""
        x = np.asarray(v, dtype=np.float64)
        for m in self._step_matrices():
            x = cg_solve(m, x, tol=self.tol)
        return x

    def apply_adjoint(self, v):
        """Multiply by the transposed state transition: the same symmetric
        step systems are solved in reverse order."""
        x = np.asarray(v, dtype=np.float64)
        for m in self._step_matrices(reverse=True):
            x = cg_solve(m, x, tol=self.tol)
        return x

    def as_operator(self):
        meta = {"filter": self.config.model, "config": self.config}
        return LinearOperator(self.n, self.apply, self.apply_adjoint, meta)


def evolve(f, config, tol=DEFAULT_TOL):
    """Run the semi-implicit evolution from u^0 = f.

    Returns the final image and the frozen per-step coefficient fields.
    """
    u = f.data.copy()
    fields = []
    for _ in range(config.steps):
        step_field = _step_fields(Image(f.nx, f.ny, u), config)
        m = _matrix_from_fields(f.nx, f.ny, config, step_field)
        u = cg_solve(m, u, tol=tol, x0=u)
        fields.append(step_field)
    frozen = FrozenEvolution(f.nx, f.ny, config, fields, u.copy(), tol)
    return Image(f.nx, f.ny, u), frozen


def apply_S(frozen, v):
    """Forward state-transition application (module-level convenience)."""
    return frozen.apply(v)


def apply_S_adjoint(frozen, v):
    """Adjoint state-transition application (module-level convenience)."""
    return frozen.apply_adjoint(v)

"""Matrix-free operators and iterative solvers.

Every filter in this package exposes its state transition as a
:class:`LinearOperator` with a forward and an adjoint application, so
downstream code (echo extraction, randomized compression) never needs the
dense matrix. Sparse system matrices are stored in compressed row layout
(scipy CSR). The solvers accept either a sparse matrix or an operator and
work on single vectors as well as on blocks of right-hand sides, which is
what makes the randomized rangefinder affordable.

A dense :func:`materialize` oracle is provided for testing: it applies the
operator to every unit impulse.
"""

import numpy as np
import scipy.sparse as sp

from .errors import SolverError

__all__ = [
    "LinearOperator",
    "CountingOperator",
    "cg_solve",
    "bicgstab_solve",
    "materialize",
    "materialize_adjoint",
]

DEFAULT_TOL = 1e-9


class LinearOperator:
    """A linear map given by its forward and adjoint application.

    Both callables must accept an (n,) vector or an (n, m) block and return
    the same shape. Operators are immutable after construction and safe to
    apply concurrently.
    """

    def __init__(self, dim, apply_fn, apply_adjoint_fn, meta=None):
        self.dim = int(dim)
        self._apply = apply_fn
        self._apply_adjoint = apply_adjoint_fn
        self.meta = dict(meta or {})

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._check_shape(x)
        return self._apply(x)

    def apply_adjoint(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._check_shape(x)
        return self._apply_adjoint(x)

    def _check_shape(self, x):
        if x.shape[0] != self.dim:
            raise ValueError(f"operand has leading dimension {x.shape[0]}, expected {self.dim}")

    @classmethod
    def from_matrix(cls, matrix, meta=None):
        """Wrap a dense array or scipy sparse matrix."""
        if sp.issparse(matrix):
            mat = matrix.tocsr()
            mat_t = mat.T.tocsr()
            return cls(mat.shape[0], lambda x: mat @ x, lambda x: mat_t @ x, meta)
        mat = np.asarray(matrix, dtype=np.float64)
        return cls(mat.shape[0], lambda x: mat @ x, lambda x: mat.T @ x, meta)


class CountingOperator(LinearOperator):
    """Delegating wrapper that counts applications column by column.

    A block of m columns counts as m applications; forward and adjoint are
    tallied together (both cost one filter evaluation each).
    """

    def __init__(self, op):
        super().__init__(op.dim, op.apply, op.apply_adjoint, op.meta)
        self.inner = op
        self.applications = 0

    def apply(self, x):
        self.applications += 1 if np.ndim(x) == 1 else np.shape(x)[1]
        return super().apply(x)

    def apply_adjoint(self, x):
        self.applications += 1 if np.ndim(x) == 1 else np.shape(x)[1]
        return super().apply_adjoint(x)


def _as_matvec(matrix_or_op, adjoint=False):
    if isinstance(matrix_or_op, LinearOperator):
        return (matrix_or_op.apply_adjoint if adjoint else matrix_or_op.apply), matrix_or_op.dim
    if sp.issparse(matrix_or_op):
        mat = matrix_or_op.T.tocsr() if adjoint else matrix_or_op.tocsr()
        return (lambda x: mat @ x), mat.shape[0]
    mat = np.asarray(matrix_or_op, dtype=np.float64)
    if adjoint:
        mat = mat.T
    return (lambda x: mat @ x), mat.shape[0]


def _prepare_rhs(b, dim):
    b = np.asarray(b, dtype=np.float64)
    single = b.ndim == 1
    if single:
        b = b[:, None]
    if b.shape[0] != dim:
        raise ValueError("right-hand side does not match operator dimension")
    return b, single


def cg_solve(matrix, rhs, tol=DEFAULT_TOL, max_iter=None, x0=None):
    """Conjugate gradients for symmetric positive (semi)definite systems.

    Accepts a single right-hand side or a block of columns, which are
    iterated together with per-column step sizes. Returns x with
    ||A x - b|| <= tol * ||b|| for every column; a zero column yields a zero
    solution immediately. Raises :class:`SolverError` with the worst final
    relative residual if max_iter (default 10*dim) is exhausted.
    """
    matvec, dim = _as_matvec(matrix)
    b, single = _prepare_rhs(rhs, dim)
    if max_iter is None:
        max_iter = 10 * dim

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    if x.ndim == 1:
        x = x[:, None]
    b_norm = np.linalg.norm(b, axis=0)
    target = tol * b_norm
    r = b - matvec(x) if x.any() else b.copy()
    p = r.copy()
    rs = np.einsum("ij,ij->j", r, r)
    active = np.sqrt(rs) > target
    work = np.empty_like(b)

    for _ in range(max_iter):
        if not active.any():
            break
        ap = matvec(p)
        pap = np.einsum("ij,ij->j", p, ap)
        alpha = np.where(active & (pap > 0), rs / np.where(pap > 0, pap, 1.0), 0.0)
        np.multiply(p, alpha, out=work)
        x += work
        np.multiply(ap, alpha, out=work)
        r -= work
        rs_new = np.einsum("ij,ij->j", r, r)
        beta = np.where(active & (rs > 0), rs_new / np.where(rs > 0, rs, 1.0), 0.0)
        p *= beta
        p += r
        rs = rs_new
        active = np.sqrt(rs) > target
    else:
        res = np.linalg.norm(b - matvec(x), axis=0)
        bad = res > np.maximum(target, 0.0)
        if bad.any():
            worst = float(np.max(res[bad] / np.maximum(b_norm[bad], 1e-300)))
            raise SolverError(f"CG did not converge within {max_iter} iterations "
                              f"(relative residual {worst:.3e})", residual=worst)

    return x[:, 0] if single else x


def bicgstab_solve(matrix, rhs, tol=DEFAULT_TOL, max_iter=None, x0=None):
    """Stabilised biconjugate gradients for general invertible systems.

    Same calling convention as :func:`cg_solve`. Breakdowns restart the
    iteration from the current residual; persistent stagnation past
    max_iter raises :class:`SolverError`.
    """
    matvec, dim = _as_matvec(matrix)
    b, single = _prepare_rhs(rhs, dim)
    if max_iter is None:
        max_iter = 10 * dim

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    if x.ndim == 1:
        x = x[:, None]
    b_norm = np.linalg.norm(b, axis=0)
    target = tol * b_norm

    r = b - matvec(x) if x.any() else b.copy()
    r0 = r.copy()
    rho = np.ones(b.shape[1])
    alpha = np.ones(b.shape[1])
    omega = np.ones(b.shape[1])
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    res = np.linalg.norm(r, axis=0)
    active = res > target
    eps = 1e-300

    for _ in range(max_iter):
        if not active.any():
            break
        rho_new = np.einsum("ij,ij->j", r0, r)
        # restart columns whose shadow residual degenerated
        stalled = active & (np.abs(rho_new) < eps * np.maximum(res, 1.0))
        if stalled.any():
            r0[:, stalled] = r[:, stalled]
            p[:, stalled] = 0.0
            v[:, stalled] = 0.0
            rho[stalled] = 1.0
            alpha[stalled] = 1.0
            omega[stalled] = 1.0
            rho_new = np.einsum("ij,ij->j", r0, r)
        beta = np.where(active, (rho_new / np.where(np.abs(rho) > eps, rho, 1.0))
                        * (alpha / np.where(np.abs(omega) > eps, omega, 1.0)), 0.0)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = matvec(p)
        r0v = np.einsum("ij,ij->j", r0, v)
        alpha = np.where(active & (np.abs(r0v) > eps), rho / np.where(np.abs(r0v) > eps, r0v, 1.0), 0.0)
        s = r - alpha * v
        t = matvec(s)
        tt = np.einsum("ij,ij->j", t, t)
        omega = np.where(active & (tt > eps), np.einsum("ij,ij->j", t, s) / np.where(tt > eps, tt, 1.0), 0.0)
        x += alpha * p + omega * s
        r = s - omega * t
        res = np.linalg.norm(r, axis=0)
        active = res > target
    else:
        res = np.linalg.norm(b - matvec(x), axis=0)
        bad = res > np.maximum(target, 0.0)
        if bad.any():
            worst = float(np.max(res[bad] / np.maximum(b_norm[bad], 1e-300)))
            raise SolverError(f"BiCGSTAB did not converge within {max_iter} iterations "
                              f"(relative residual {worst:.3e})", residual=worst)

    return x[:, 0] if single else x


def materialize(op):
    """Dense matrix of an operator: column i is op.apply(e_i). Test oracle."""
    return np.asarray(op.apply(np.eye(op.dim)))


def materialize_adjoint(op):
    """Dense matrix of the adjoint: column i is op.apply_adjoint(e_i)."""
    return np.asarray(op.apply_adjoint(np.eye(op.dim)))

"""Probabilistic truncated SVD compression of state transitions.

The N-by-N state transition is never formed: a randomized rangefinder
applies the operator (and its adjoint) to a seeded Gaussian probe block of
width k + oversample, orthonormalising after every application, and a
small dense SVD of the projected matrix yields the top-k factors. Storage
drops from N^2 to 2Nk floats; echo reconstruction is a single slim
matrix-vector product.

Two extras from the evaluation pipeline live here as well: Hutchinson
probing of the Frobenius reconstruction error, and the exclusion mechanism
for rapidly decaying diffusivities, which detects near-impulse echoes via
a stochastic diagonal estimate, stores their coordinates, and deflates
their rows and columns before the factorisation; reconstruction re-adds
them as exact unit impulses.
"""

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .echo import EchoImage
from .errors import FormatError
from .grid import Image
from .linsolve import CountingOperator, LinearOperator

__all__ = [
    "CompressionConfig",
    "TruncatedSVD",
    "ExclusionList",
    "CompressedEchoes",
    "rangefinder",
    "rsvd",
    "estimate_diagonal",
    "compress_echoes",
    "reconstruct_source",
    "reconstruct_drain",
    "apply_compressed",
    "frobenius_error_estimate",
    "spectrum_export",
    "singular_vector_export",
    "serialize",
    "deserialize",
    "compression_error_curve",
]

MAGIC = b"ECHOSVD1"


def make_rng(seed):
    """Counter-based generator so runs reproduce across platforms."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class CompressionConfig:
    """Rank target (absolute or as a fraction of N), subspace iteration
    power q, oversampling, probe seed, and the exclusion threshold."""

    rank: int | None = None
    rank_fraction: float | None = None
    power: int = 3
    oversample: int = 10
    seed: int = 0
    epsilon: float = 0.0
    hutchinson_probes: int = 100
    diagonal_probes: int = 64

    def __post_init__(self):
        if (self.rank is None) == (self.rank_fraction is None):
            raise ValueError("specify exactly one of rank and rank_fraction")
        if self.rank is not None and self.rank < 0:
            raise ValueError("rank must be nonnegative")
        if self.rank_fraction is not None and not 0 < self.rank_fraction <= 1:
            raise ValueError("rank_fraction must lie in (0, 1]")
        if self.power < 1:
            raise ValueError("power q must be at least 1")
        if self.oversample < 0:
            raise ValueError("oversampling must be nonnegative")
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")

    def resolve_rank(self, n):
        if self.rank is not None:
            return self.rank
        return int(round(self.rank_fraction * n))


@dataclass
class TruncatedSVD:
    """Factors U (orthonormal), sigma (nonincreasing), and VS = V * sigma.

    VS is the stored right factor because reconstruction only ever needs
    V_k Sigma_k; the orthonormal V is exposed as a property.
    """

    U: np.ndarray
    sigma: np.ndarray
    VS: np.ndarray

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        self.VS = np.ascontiguousarray(self.VS, dtype=np.float64)
        if self.sigma.ndim != 1 or np.any(np.diff(self.sigma) > 0) or np.any(self.sigma < 0):
            raise ValueError("singular values must be nonnegative and nonincreasing")
        if self.U.shape[1] != self.sigma.size or self.VS.shape[1] != self.sigma.size:
            raise ValueError("factor widths disagree with the singular values")

    @property
    def k(self):
        return self.sigma.size

    @property
    def V(self):
        safe = np.where(self.sigma > 0, self.sigma, 1.0)
        return self.VS / safe

    def truncated(self, rank):
        rank = min(rank, self.k)
        return TruncatedSVD(self.U[:, :rank], self.sigma[:rank], self.VS[:, :rank])


@dataclass(frozen=True)
class ExclusionList:
    """Pixel coordinates whose echoes are stored as exact unit impulses."""

    nx: int
    ny: int
    coords: tuple

    def __post_init__(self):
        seen = set()
        for i, j in self.coords:
            if not (0 <= i < self.nx and 0 <= j < self.ny):
                raise ValueError(f"excluded pixel ({i}, {j}) out of range")
            if (i, j) in seen:
                raise ValueError(f"duplicate excluded pixel ({i}, {j})")
            seen.add((i, j))

    def __len__(self):
        return len(self.coords)

    def linear_indices(self):
        return np.array(sorted(j * self.nx + i for i, j in self.coords), dtype=np.int64)

    @classmethod
    def from_linear(cls, nx, ny, indices):
        coords = tuple((int(k % nx), int(k // nx)) for k in sorted(int(k) for k in indices))
        return cls(nx, ny, coords)


@dataclass
class CompressedEchoes:
    """Low-rank echo factors over the deflated pixels plus the exclusions."""

    nx: int
    ny: int
    svd: TruncatedSVD
    exclusions: ExclusionList
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        """Full operator dimension (2N for flow transitions)."""
        return len(self.exclusions) + self.svd.U.shape[0]

    def kept_indices(self):
        mask = np.ones(self.dim, dtype=bool)
        mask[self.exclusions.linear_indices()] = False
        return np.flatnonzero(mask)


# ---------------------------------------------------------------------------
# Randomized factorisation
# ---------------------------------------------------------------------------


def _orth(y):
    q, _ = np.linalg.qr(y)
    return q


def rangefinder(op, width, power=3, seed=0, rng=None):
    """Orthonormal basis approximating the operator's dominant range.

    Draws a Gaussian probe block, applies the operator, and orthonormalises
    after every application; power q > 1 interleaves adjoint/forward sweeps
    (randomized subspace iteration), which sharpens slowly decaying
    spectra. A collapsed (exactly zero) probe column is redrawn once.
    """
    if width > op.dim:
        raise ValueError("rangefinder width exceeds operator dimension")
    if power < 1:
        raise ValueError("power must be at least 1")
    rng = rng or make_rng(seed)
    g = rng.standard_normal((op.dim, width))
    y = op.apply(g)
    dead = np.linalg.norm(y, axis=0) == 0.0
    if dead.any():
        g2 = rng.standard_normal((op.dim, int(dead.sum())))
        y[:, dead] = op.apply(g2)
        if (np.linalg.norm(y, axis=0) == 0.0).any():
            raise RuntimeError("rangefinder probe collapsed twice; operator may be zero")
    q = _orth(y)
    for _ in range(power - 1):
        z = _orth(op.apply_adjoint(q))
        q = _orth(op.apply(z))
    return q


def rsvd(op, cfg, nx=None, ny=None):
    """Randomized truncated SVD of an operator (no exclusion handling).

    Returns the factorisation and the number of operator applications
    spent in the rangefinder/projection path, which is exactly
    2 q (k + oversample).
    """
    counter = CountingOperator(op)
    k = cfg.resolve_rank(op.dim if nx is None else nx * ny)
    width = k + cfg.oversample
    if width > op.dim:
        raise ValueError(f"k + oversample = {width} exceeds dimension {op.dim}")
    q = rangefinder(counter, width, cfg.power, seed=cfg.seed)
    b = counter.apply_adjoint(q)  # S^T Q, so b.T = Q^T S
    ubar, sigma, vt = np.linalg.svd(b.T, full_matrices=False)
    u = q @ ubar[:, :k]
    svd = TruncatedSVD(u, sigma[:k], vt[:k].T * sigma[:k])
    return svd, counter.applications


def estimate_diagonal(op, probes=64, rng=None, seed=0):
    """Stochastic diagonal estimate: componentwise mean of z * (S z).

    Returns the estimate and its per-entry standard error.
    """
    rng = rng or make_rng(seed)
    z = rng.integers(0, 2, size=(op.dim, probes)).astype(np.float64) * 2.0 - 1.0
    samples = z * op.apply(z)
    est = samples.mean(axis=1)
    se = samples.std(axis=1, ddof=1) / np.sqrt(probes)
    return est, se


def _deflated_operator(op, kept):
    """Restrict an operator to the kept coordinates (zero-embed, apply, drop)."""
    dim = op.dim

    def embed(x):
        if x.ndim == 1:
            full = np.zeros(dim)
            full[kept] = x
        else:
            full = np.zeros((dim, x.shape[1]))
            full[kept] = x
        return full

    return LinearOperator(
        kept.size,
        lambda x: op.apply(embed(np.asarray(x, dtype=np.float64)))[kept],
        lambda x: op.apply_adjoint(embed(np.asarray(x, dtype=np.float64)))[kept],
        meta=op.meta,
    )


def find_exclusions(op, nx, ny, cfg, rng=None):
    """Detect near-impulse echoes: diagonal entries of S above 1 - epsilon.

    Candidates come from the stochastic diagonal estimate (flagged above
    1 - epsilon - 3 standard errors); each candidate is confirmed with one
    exact unit-impulse application before it is excluded.
    """
    if op.dim != nx * ny:
        raise ValueError("exclusion requires a transition over single-plane pixels")
    rng = rng or make_rng(cfg.seed + 1)
    est, se = estimate_diagonal(op, cfg.diagonal_probes, rng=rng)
    candidates = np.flatnonzero(est > 1.0 - cfg.epsilon - 3.0 * se)
    if candidates.size == 0:
        return ExclusionList(nx, ny, ()), 0
    impulses = np.zeros((op.dim, candidates.size))
    impulses[candidates, np.arange(candidates.size)] = 1.0
    diag_exact = op.apply(impulses)[candidates, np.arange(candidates.size)]
    confirmed = candidates[diag_exact > 1.0 - cfg.epsilon]
    return ExclusionList.from_linear(nx, ny, confirmed), int(candidates.size)


def compress_echoes(op, cfg, nx, ny, meta=None):
    """Compress a state transition into low-rank factors plus exclusions.

    With epsilon = 0 this is a plain randomized SVD. Otherwise near-impulse
    pixels are verified, recorded by coordinate, and deflated from the
    operator before the factorisation; their echoes decompress as exact
    impulses. The stats entry of the result records the application counts
    of the rangefinder/projection path and of the probing phases.
    """
    meta = dict(meta or {})
    counter = CountingOperator(op)
    if cfg.epsilon > 0.0:
        exclusions, candidates = find_exclusions(counter, nx, ny, cfg)
        probe_apps = counter.applications
    else:
        exclusions, candidates = ExclusionList(nx, ny, ()), 0
        probe_apps = 0

    kept_mask = np.ones(op.dim, dtype=bool)
    kept_mask[exclusions.linear_indices()] = False
    kept = np.flatnonzero(kept_mask)

    # rank fractions always resolve against the full dimension, not the
    # deflated one, so Table-style fraction sweeps stay comparable
    k = cfg.resolve_rank(op.dim)
    if kept.size == 0:
        svd = TruncatedSVD(np.zeros((0, 0)), np.zeros(0), np.zeros((0, 0)))
        factor_apps = 0
    else:
        deflated = _deflated_operator(counter, kept)
        before = counter.applications
        svd, _ = _rsvd_at_rank(deflated, k, cfg)
        factor_apps = counter.applications - before

    meta.setdefault("config", cfg)
    meta["stats"] = {
        "rangefinder_applications": factor_apps,
        "probe_applications": probe_apps,
        "diagonal_candidates": candidates,
    }
    return CompressedEchoes(nx, ny, svd, exclusions, meta)


def _rsvd_at_rank(op, k, cfg):
    """rsvd with an explicit rank (fractions are resolved against full N)."""
    sub_cfg = CompressionConfig(
        rank=k,
        power=cfg.power,
        oversample=cfg.oversample,
        seed=cfg.seed,
        hutchinson_probes=cfg.hutchinson_probes,
        diagonal_probes=cfg.diagonal_probes,
    )
    return rsvd(op, sub_cfg)


# ---------------------------------------------------------------------------
# Reconstruction and evaluation
# ---------------------------------------------------------------------------


def _excluded_position(c, index):
    excl = c.exclusions.linear_indices()
    pos = np.searchsorted(excl, index)
    return pos if pos < excl.size and excl[pos] == index else None


def reconstruct_source(c, i, rank=None):
    """Source echo from the compressed factors (excluded pixels: impulses)."""
    return _reconstruct(c, i, rank, drain=False)


def reconstruct_drain(c, j, rank=None):
    """Drain echo from the compressed factors (excluded pixels: impulses)."""
    return _reconstruct(c, j, rank, drain=True)


def _reconstruct(c, index, rank, drain):
    if not 0 <= index < c.dim:
        raise ValueError(f"index {index} out of range")
    direction = "drain" if drain else "source"
    meta = {**c.meta, "direction": direction, "index": int(index)}
    full = np.zeros(c.dim)
    if _excluded_position(c, index) is not None:
        full[index] = 1.0
        return EchoImage(full, {**meta, "excluded": True})
    svd = c.svd if rank is None else c.svd.truncated(rank)
    kept = c.kept_indices()
    pos = int(np.searchsorted(kept, index))
    if drain:
        values = svd.VS @ svd.U[pos, :]
    else:
        values = svd.U @ svd.VS[pos, :]
    full[kept] = values
    return EchoImage(full, meta)


def apply_compressed(c, x, rank=None):
    """Multiply the compressed transition (including impulses) by x."""
    x = np.asarray(x, dtype=np.float64)
    svd = c.svd if rank is None else c.svd.truncated(rank)
    kept = c.kept_indices()
    out = np.zeros_like(x)
    if kept.size:
        out[kept] = svd.U @ (svd.VS.T @ x[kept])
    excl = c.exclusions.linear_indices()
    if excl.size:
        out[excl] += x[excl]
    return out


def frobenius_error_estimate(op, c, probes=100, seed=0):
    """Hutchinson estimate of ||S - S_hat||_F via Rademacher probes."""
    if probes < 1:
        raise ValueError("need at least one probe")
    rng = make_rng(seed)
    z = rng.integers(0, 2, size=(op.dim, probes)).astype(np.float64) * 2.0 - 1.0
    diff = op.apply(z) - apply_compressed(c, z)
    return float(np.sqrt(np.mean(np.einsum("ij,ij->j", diff, diff))))


def spectrum_export(c, path):
    """CSV of (index, sigma): exactly k rows, sorted by index, no header."""
    with open(path, "w") as fh:
        for idx, s in enumerate(c.svd.sigma, start=1):
            fh.write(f"{idx},{s:.17g}\n")


def singular_vector_export(c, index):
    """Left singular vector as a displayable image; zero maps to grey 127.5."""
    if not 0 <= index < c.svd.k:
        raise ValueError(f"singular vector index {index} out of range")
    if c.dim != c.nx * c.ny:
        raise ValueError("singular vector export needs a single-plane transition")
    vec = np.zeros(c.dim)
    vec[c.kept_indices()] = c.svd.U[:, index]
    peak = np.abs(vec).max()
    scale = 127.5 / peak if peak > 0 else 0.0
    return Image(c.nx, c.ny, 127.5 + vec * scale)


# ---------------------------------------------------------------------------
# Binary serialisation
# ---------------------------------------------------------------------------


def serialize(c, path, float32=False):
    """Write the ECHOSVD1 binary format (factors column-major, little-endian)."""
    width = 4 if float32 else 8
    dtype = "<f4" if float32 else "<f8"
    k = c.svd.k
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IIII", c.nx, c.ny, k, len(c.exclusions)))
    buf.write(struct.pack("<B7x", width))
    for i, j in sorted(c.exclusions.coords, key=lambda p: p[1] * c.nx + p[0]):
        buf.write(struct.pack("<II", i, j))
    buf.write(np.asarray(c.svd.U, dtype=dtype).tobytes(order="F"))
    buf.write(np.asarray(c.svd.VS, dtype=dtype).tobytes(order="F"))
    buf.write(np.asarray(c.svd.sigma, dtype=dtype).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def deserialize(path):
    """Read an ECHOSVD1 file back into :class:`CompressedEchoes`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 + 16 + 8 or raw[:8] != MAGIC:
        raise FormatError(f"{path}: not an ECHOSVD1 file")
    nx, ny, k, m = struct.unpack_from("<IIII", raw, 8)
    (width,) = struct.unpack_from("<B", raw, 24)
    if width not in (4, 8):
        raise FormatError(f"{path}: unsupported float width {width}")
    offset = 32
    coords = []
    for _ in range(m):
        i, j = struct.unpack_from("<II", raw, offset)
        coords.append((i, j))
        offset += 8
    payload = raw[offset:]
    dtype = np.dtype("<f4" if width == 4 else "<f8")
    count = len(payload) // width
    if count * width != len(payload) or (k > 0 and (count - k) % (2 * k) != 0):
        raise FormatError(f"{path}: truncated factor payload")
    deflated = (count - k) // (2 * k) if k > 0 else nx * ny - m
    values = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float64)
    u = values[: deflated * k].reshape((deflated, k), order="F")
    vs = values[deflated * k : 2 * deflated * k].reshape((deflated, k), order="F")
    sigma = values[2 * deflated * k :]
    try:
        exclusions = ExclusionList(nx, ny, tuple(coords))
        svd = TruncatedSVD(u, sigma, vs)
    except ValueError as exc:
        raise FormatError(f"{path}: inconsistent factors ({exc})") from exc
    return CompressedEchoes(nx, ny, svd, exclusions, {"float_width": width})


# ---------------------------------------------------------------------------
# Error-versus-rank experiments
# ---------------------------------------------------------------------------


def compression_error_curve(op, fractions, cfg, nx, ny, meta=None):
    """Estimated reconstruction error across rank fractions.

    One factorisation is computed at the largest requested rank and
    truncated to the smaller ones, exactly as the per-filter evaluation in
    the compression experiments; the Hutchinson probes (and the exact
    operator applications on them) are shared across the fractions, which
    makes the estimated error provably nonincreasing in the rank.

    Returns (records, compressed) where records are dicts with fraction,
    rank, and error, and compressed is the full-rank factorisation.
    """
    fractions = sorted(fractions)
    n_full = op.dim
    k_max = int(round(fractions[-1] * n_full))
    run_cfg = CompressionConfig(
        rank=k_max,
        power=cfg.power,
        oversample=cfg.oversample,
        seed=cfg.seed,
        epsilon=cfg.epsilon,
        hutchinson_probes=cfg.hutchinson_probes,
        diagonal_probes=cfg.diagonal_probes,
    )
    compressed = compress_echoes(op, run_cfg, nx, ny, meta=meta)

    rng = make_rng(cfg.seed + 2)
    z = rng.integers(0, 2, size=(op.dim, cfg.hutchinson_probes)).astype(np.float64) * 2.0 - 1.0
    sz = op.apply(z)
    records = []
    for frac in fractions:
        k = int(round(frac * n_full))
        diff = sz - apply_compressed(compressed, z, rank=k)
        err = float(np.sqrt(np.mean(np.einsum("ij,ij->j", diff, diff))))
        records.append({"fraction": frac, "rank": k, "error": err})
    return records, compressed

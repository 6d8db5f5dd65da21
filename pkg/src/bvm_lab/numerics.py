"""Deterministic numerical substrate: SPD linear algebra, quadrature, RNG.

Everything here is dense and desk-scale (dimensions up to a few hundred).
All functions are pure; RandomSource instances are the only stateful objects
and each one is meant to be consumed by a single task.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class NotPositiveDefinite(Exception):
    """A matrix expected to be symmetric positive definite is not."""


class DimensionMismatch(Exception):
    """Operands of incompatible shapes."""


class NonFiniteIntegrand(Exception):
    """An integrand produced NaN or infinity."""


SYMMETRY_RTOL = 1e-12


def check_spd_input(m: np.ndarray) -> np.ndarray:
    """Validate shape and symmetry of a dense SPD candidate; return as float array."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
        raise NotPositiveDefinite("matrix is not symmetric to 1e-12 relative")
    return m


class CholeskyFactor:
    """Lower-triangular Cholesky factor of an SPD matrix.

    Supports solves, log-determinant, matvecs by the factor and its inverse,
    and correlated Gaussian sampling.  ``lower @ lower.T`` reproduces the
    input matrix.
    """

    def __init__(self, lower: np.ndarray):
        self.lower = lower
        self.dim = lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve M x = b for the factored matrix M."""
        return scipy.linalg.cho_solve((self.lower, True), b, check_finite=False)

    def logdet(self) -> float:
        """log det of the factored matrix."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def factor_matvec(self, v: np.ndarray) -> np.ndarray:
        """L v (rows of v if 2-d, acting on the last axis)."""
        return v @ self.lower.T

    def inv_factor_t_matvec(self, v: np.ndarray) -> np.ndarray:
        """L^{-T} v for 1-d v, or row-wise for 2-d v (last axis)."""
        return scipy.linalg.solve_triangular(
            self.lower, np.atleast_2d(v).T, lower=True, trans="T", check_finite=False
        ).T.reshape(np.shape(v))

    def quad_form_inv(self, v: np.ndarray) -> float | np.ndarray:
        """v^T M^{-1} v (row-wise if v is 2-d)."""
        w = scipy.linalg.solve_triangular(
            self.lower, np.atleast_2d(v).T, lower=True, check_finite=False
        )
        out = np.sum(w * w, axis=0)
        return float(out[0]) if np.ndim(v) == 1 else out

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw N(0, M) vectors: L @ standard normal."""
        if size is None:
            return self.lower @ rng.standard_normal(self.dim)
        return rng.standard_normal((size, self.dim)) @ self.lower.T


def spd_factor(m: np.ndarray) -> CholeskyFactor:
    """Cholesky-factor a dense symmetric positive-definite matrix.

    Raises NotPositiveDefinite when a pivot fails (non-concave point or a
    broken prior); no jitter is added, failure is informative here.
    """
    m = check_spd_input(m)
    try:
        lower = scipy.linalg.cholesky(m, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as err:
        raise NotPositiveDefinite(str(err)) from err
    return CholeskyFactor(lower)


def trace_solve(a: np.ndarray, b: np.ndarray) -> float:
    """tr(A^{-1} B) for SPD A and symmetric B of matching dimension."""
    a = check_spd_input(a)
    b = np.asarray(b, dtype=float)
    if b.shape != a.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    factor = spd_factor(a)
    # tr(A^{-1}B) = tr(L^{-1} B L^{-T}) with A = L L^T
    w = scipy.linalg.solve_triangular(factor.lower, b, lower=True, check_finite=False)
    w = scipy.linalg.solve_triangular(factor.lower, w.T, lower=True, check_finite=False)
    return float(np.trace(w))


def sym_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    m = check_spd_input(m)
    vals, vecs = scipy.linalg.eigh(m, check_finite=False)
    if np.any(vals < -1e-12 * max(1.0, float(vals.max(initial=1.0)))):
        raise NotPositiveDefinite("negative eigenvalue in sym_sqrt")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def sym_opnorm(m: np.ndarray) -> float:
    """Operator (spectral) norm of a symmetric matrix."""
    vals = scipy.linalg.eigvalsh(np.asarray(m, dtype=float), check_finite=False)
    return float(np.max(np.abs(vals)))


_QUAD_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def quadrature_nodes(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1], cached per count."""
    if n_nodes < 16:
        raise ValueError("n_nodes must be at least 16")
    if n_nodes not in _QUAD_CACHE:
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        _QUAD_CACHE[n_nodes] = ((x + 1.0) / 2.0, w / 2.0)
    return _QUAD_CACHE[n_nodes]


def quadrature_unit_interval(f, n_nodes: int = 2048) -> float:
    """Integrate f over [0, 1] with Gauss-Legendre quadrature.

    The integrands used in this package are entire functions, so the result
    is stable under node doubling to well below 1e-10.
    """
    x, w = quadrature_nodes(n_nodes)
    vals = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteIntegrand("integrand returned non-finite values")
    return float(w @ vals)


@dataclass(frozen=True)
class RandomSource:
    """Reproducible random source: (seed, stream) -> a Philox generator.

    Identical (seed, stream) gives bit-identical draw sequences across runs
    and platforms.  Streams for parallel replications are derived as
    stream = replication index; nested roles fork children via child().
    """

    seed: int
    stream: tuple[int, ...] = (0,)

    def __post_init__(self):
        if isinstance(self.stream, int):
            object.__setattr__(self, "stream", (self.stream,))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(self.stream))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *key: int) -> "RandomSource":
        """Independent sub-source for a nested role (data, chain, quantile MC ...)."""
        return RandomSource(self.seed, tuple(self.stream) + tuple(key))


def gaussian_vector(rs: RandomSource, dim: int) -> np.ndarray:
    """One standard normal vector, deterministic per (seed, stream)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return rs.generator().standard_normal(dim)

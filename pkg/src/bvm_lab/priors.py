"""Gaussian priors (truncation and smoothing) and effective dimension.

A prior is a centered Gaussian with diagonal precision g_j^2 living on the
leading-coordinate subspace of dimension support_dim; coordinates beyond the
support are excluded outright from optimization and sampling rather than
penalized with a large finite weight.  The effective dimension
tr{H^2 (F + G^2)^{-1}} replaces the raw parameter count everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import DimensionMismatch, trace_solve


@dataclass(frozen=True)
class PriorSpec:
    """kind is "truncation" (zero penalty on the support) or "smooth"
    (penalty w * j^(2s) on coordinate j).  support_dim is the number of
    leading coordinates the prior lives on."""

    kind: str
    support_dim: int
    smoothness: float | None = None
    scale: float | None = None

    def __post_init__(self):
        if self.support_dim < 1:
            raise ValueError("support_dim must be >= 1")
        if self.kind == "truncation":
            if self.smoothness is not None or self.scale is not None:
                raise ValueError("truncation prior takes no smoothness/scale")
        elif self.kind == "smooth":
            if self.smoothness is None or self.scale is None:
                raise ValueError("smooth prior needs smoothness and scale")
            if self.smoothness <= 0.5:
                raise ValueError("smoothness must exceed 1/2")
            if self.scale < 0.0:
                raise ValueError("scale must be nonnegative")
        else:
            raise ValueError(f"unknown prior kind {self.kind!r}")

    def label(self) -> str:
        if self.kind == "truncation":
            return f"truncation(m={self.support_dim})"
        return f"smooth(s={self.smoothness:g},w={self.scale:g},m={self.support_dim})"


def truncation_prior(m: int) -> PriorSpec:
    return PriorSpec("truncation", m)


def smooth_prior(smoothness: float, scale: float, support_dim: int) -> PriorSpec:
    return PriorSpec("smooth", support_dim, smoothness, scale)


def default_smooth_support(n: int) -> int:
    """Conventional truncation level n^(1/3)/log n for smooth priors."""
    if n < 3:
        raise ValueError("n must be >= 3")
    return max(1, math.ceil(n ** (1.0 / 3.0) / math.log(n)))


def penalty_diagonal(prior: PriorSpec, p: int) -> np.ndarray:
    """Diagonal of the squared precision on the support (length <= p)."""
    dim = min(prior.support_dim, p)
    if prior.kind == "truncation":
        return np.zeros(dim)
    j = np.arange(1, dim + 1, dtype=float)
    return prior.scale * j ** (2.0 * prior.smoothness)


def precision(prior: PriorSpec, p: int) -> np.ndarray:
    """Squared precision as a dense diagonal operator on the support."""
    return np.diag(penalty_diagonal(prior, p))


@dataclass(frozen=True)
class EffDim:
    """Effective dimension value with the support size it was computed on.

    The classical bound value <= support_dim holds when H^2 <= F + G^2; with
    the audited variance operator at the truth and curvature at the penalized
    target the inequality can be violated by a small relative amount, so it
    is exposed as a checked property rather than enforced at construction.
    """

    value: float
    support_dim: int

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value > 0.0):
            raise ValueError("effective dimension must be positive and finite")

    def within_support_bound(self, rel_tol: float = 0.0) -> bool:
        return self.value <= self.support_dim * (1.0 + rel_tol) + 1e-9


def effective_dimension(f: np.ndarray, g_sq, h_sq: np.ndarray) -> EffDim:
    """tr{H^2 (F + G^2)^{-1}} on the support subspace.

    g_sq may be the dense penalty matrix or its diagonal vector.
    """
    f = np.asarray(f, dtype=float)
    g_sq = np.asarray(g_sq, dtype=float)
    if g_sq.ndim == 1:
        g_sq = np.diag(g_sq)
    if f.shape != g_sq.shape or f.shape != np.shape(h_sq):
        raise DimensionMismatch("operator shapes disagree")
    value = trace_solve(f + g_sq, np.asarray(h_sq, dtype=float))
    return EffDim(value, f.shape[0])


@dataclass(frozen=True)
class SandwichReport:
    value: float
    lower: float
    upper: float
    level: int
    ok: bool


def dimension_sandwich_check(
    f: np.ndarray, prior: PriorSpec, h_sq: np.ndarray, n: int
) -> SandwichReport:
    """Two-sided bracket on the effective dimension from the prior geometry.

    Truncation: value must lie in [m * c1 n / (c2 n + g_m^2), m].  Smoothing:
    with m the largest level whose penalty is at most n, the bracket is
    m c1 n / (c1 n + g_m^2) from below and m (1 + c2 c2g n / g_m^2) from
    above, with the curvature ratios c1, c2 and the penalty tail ratio c2g
    measured from the supplied operators.  Report-only, never raises.
    """
    f = np.asarray(f, dtype=float)
    diag = penalty_diagonal(prior, f.shape[0])
    eff = effective_dimension(f, diag, h_sq)
    eigs = np.linalg.eigvalsh(f)
    c1 = float(eigs.min()) / n
    c2 = float(eigs.max()) / n
    if prior.kind == "truncation" or np.all(diag == 0.0):
        m = diag.size
        lower = m * c1 * n / (c2 * n + float(diag.max(initial=0.0)))
        upper = float(m)
    else:
        below = np.nonzero(diag <= n)[0]
        m = int(below[-1]) + 1 if below.size else 1
        g_m_sq = float(diag[m - 1])
        lower = m * c1 * n / (c1 * n + g_m_sq)
        # penalty tail ratio at the chosen level, finite-sum version
        c2g = float(g_m_sq / m * np.sum(1.0 / diag[m - 1 :]))
        upper = m * (1.0 + c2 * c2g * n / g_m_sq)
    ok = lower - 1e-9 <= eff.value <= upper + 1e-9
    return SandwichReport(eff.value, float(lower), float(upper), int(m), ok)


@dataclass(frozen=True)
class Tradeoff:
    scale: float
    level: int


def tradeoff_w(n: int, smoothness: float) -> Tradeoff:
    """Bias-variance balanced smoothing scale w = n^{1/(2s+1)}.

    Also returns the implied effective truncation level ceil((n/w)^{1/(2s)}),
    which matches w up to rounding since w^{2s+1} = n.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if smoothness <= 0.5:
        raise ValueError("smoothness must exceed 1/2")
    scale = n ** (1.0 / (2.0 * smoothness + 1.0))
    level = math.ceil((n / scale) ** (1.0 / (2.0 * smoothness)))
    return Tradeoff(scale, level)

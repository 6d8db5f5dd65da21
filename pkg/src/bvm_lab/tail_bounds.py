"""Deviation quantiles for quadratic forms of Gaussian and sub-Gaussian vectors.

Covers three tail regimes for q = <W xi, xi>:
  * Gaussian / sub-Gaussian xi: quantile sqrt(trace + 2*sqrt(trace_sq * x) + 2*opnorm*x),
    exceeded with probability at most e^{-x};
  * a simplified, slightly looser version sqrt(trace) + sqrt(2*x*opnorm);
  * vectors with an exponential-moment bound valid only on a finite radius,
    where the quantile switches from the sub-Gaussian branch to a linear
    branch at a crossover point solved numerically.

Monte Carlo validators draw actual vectors and check the exceedance
frequencies against the stated bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats

from .numerics import DimensionMismatch, RandomSource, check_spd_input


class NoCrossing(Exception):
    """Exponential-moment radius too small for the two-branch quantile."""


REL_TOL = 1e-9


@dataclass(frozen=True)
class QuadFormSpec:
    """Summary of a PSD weighting operator W for quadratic-form tails.

    trace = tr W, trace_sq = tr W^2, opnorm = largest eigenvalue.  The full
    spectrum is optional and only needed by Monte Carlo validators.
    """

    trace: float
    trace_sq: float
    opnorm: float
    spectrum: np.ndarray | None = None

    def __post_init__(self):
        if not self.opnorm > 0.0:
            raise ValueError("opnorm must be positive")
        if self.trace_sq > self.opnorm * self.trace * (1.0 + REL_TOL):
            raise ValueError("trace_sq exceeds opnorm * trace: not a PSD spectrum")
        if self.trace < self.opnorm * (1.0 - REL_TOL):
            raise ValueError("trace below opnorm: not a PSD spectrum")

    def scaled(self, factor: float) -> "QuadFormSpec":
        spec = None if self.spectrum is None else self.spectrum * factor
        return QuadFormSpec(
            self.trace * factor, self.trace_sq * factor * factor, self.opnorm * factor, spec
        )


def spec_from_spectrum(vals: np.ndarray) -> QuadFormSpec:
    vals = np.asarray(vals, dtype=float)
    if vals.ndim != 1 or vals.size == 0:
        raise DimensionMismatch("spectrum must be a non-empty 1-d array")
    if np.any(vals < 0.0):
        raise ValueError("spectrum must be nonnegative")
    return QuadFormSpec(
        float(vals.sum()), float((vals**2).sum()), float(vals.max()), vals
    )


def spec_from_operator(w: np.ndarray) -> QuadFormSpec:
    """Spectral summary of a dense symmetric PSD matrix."""
    w = check_spd_input(w)
    vals = scipy.linalg.eigvalsh(w, check_finite=False)
    if vals[0] < -REL_TOL * max(1.0, vals[-1]):
        raise ValueError("operator has a negative eigenvalue")
    return spec_from_spectrum(np.clip(vals, 0.0, None))


def normalize_spec(spec: QuadFormSpec) -> tuple[QuadFormSpec, float]:
    """Rescale so the top eigenvalue is 1; returns (unit spec, original opnorm).

    Quantiles for the original operator are the unit-spec quantiles times
    sqrt(original opnorm), since the quadratic form scales linearly.
    """
    lam = spec.opnorm
    return spec.scaled(1.0 / lam), lam


def deviation_quantile(spec: QuadFormSpec, x: float) -> float:
    """Quantile bound for sqrt(<W xi, xi>) at confidence e^{-x}.

    The squared form tr W + 2 sqrt(tr(W^2) x) + 2 ||W|| x is exceeded with
    probability at most e^{-x} for Gaussian xi, and for sub-Gaussian xi with
    unit proxy variance.
    """
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    return math.sqrt(
        spec.trace + 2.0 * math.sqrt(spec.trace_sq * x) + 2.0 * spec.opnorm * x
    )


def deviation_quantile_simple(trace: float, opnorm: float, x: float) -> float:
    """Looser two-term quantile sqrt(trace) + sqrt(2 x opnorm).

    Dominates deviation_quantile for every spectrum with the same trace and
    top eigenvalue, which makes it the convenient plug-in for radius choices.
    """
    if min(trace, opnorm, x) < 0.0:
        raise ValueError("inputs must be nonnegative")
    return math.sqrt(trace) + math.sqrt(2.0 * x * opnorm)


def _crossover_weight(trace_sq: float, x: float) -> float:
    return 1.0 / (1.0 + math.sqrt(trace_sq) / (2.0 * math.sqrt(x)))


@dataclass(frozen=True)
class ExpTailSpec:
    """Two-branch quantile data for a vector with a finite mgf radius.

    base must have opnorm 1.  crossover_x is where the sub-Gaussian branch
    hands over to the linear branch; effective_radius and crossover_weight
    are the solved quantities that parameterize the linear branch.
    """

    base: QuadFormSpec
    mgf_radius: float
    crossover_x: float
    crossover_weight: float
    effective_radius: float


def solve_crossover(spec: QuadFormSpec, mgf_radius: float) -> ExpTailSpec:
    """Solve for the branch point of the exponential-tail quantile.

    The crossover x equates a decreasing function of the mgf radius with the
    increasing sub-Gaussian quantile plus one; bisection to residual 1e-10.
    The initial bracket top of 1e8 is doubled as needed (the root grows like
    half the squared radius, which exceeds 1e8 already for radius ~ 2e4).
    """
    if abs(spec.opnorm - 1.0) > 1e-9:
        raise ValueError("spec must be normalized to opnorm 1 (see normalize_spec)")
    if mgf_radius <= 0.0:
        raise ValueError("mgf_radius must be positive")

    def gap(x: float) -> float:
        mu = _crossover_weight(spec.trace_sq, x)
        lhs = (mgf_radius - math.sqrt(spec.trace * mu)) / mu
        return lhs - deviation_quantile(spec, x) - 1.0

    lo, hi = 1e-8, 1e8
    if gap(lo) < 0.0:
        raise NoCrossing("mgf radius too small: no admissible crossover")
    while gap(hi) > 0.0:
        hi *= 2.0
        if hi > 1e18:
            raise NoCrossing("crossover beyond 1e18; treat the tail as sub-Gaussian")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, lo) and abs(gap(0.5 * (lo + hi))) <= 1e-10:
            break
    x_c = 0.5 * (lo + hi)
    if abs(gap(x_c)) > 1e-10:
        raise NoCrossing(f"bisection residual {gap(x_c):.3e} above 1e-10")
    mu_c = _crossover_weight(spec.trace_sq, x_c)
    g_c = mgf_radius - math.sqrt(spec.trace * mu_c)
    if g_c < 1.0:
        raise NoCrossing(f"effective radius {g_c:.4f} below 1")
    return ExpTailSpec(spec, mgf_radius, x_c, mu_c, g_c)


def exp_tail_quantile(ets: ExpTailSpec, x: float) -> float:
    """Two-branch quantile: sub-Gaussian up to the crossover, linear beyond.

    The upward jump at the crossover is exactly 1 by construction.  Values
    are for the unit-opnorm operator; rescale by sqrt(opnorm) for others.
    """
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    if x <= ets.crossover_x:
        return deviation_quantile(ets.base, x)
    return ets.effective_radius / ets.crossover_weight + 2.0 * (
        x - ets.crossover_x
    ) / ets.effective_radius


@dataclass(frozen=True)
class TailCheck:
    quantile: float
    empirical: float
    bound: float
    margin: float
    ok: bool


def mc_tail_validate(
    w,
    x: float,
    n_samples: int,
    rs: RandomSource,
    family: str = "gaussian",
    threshold: float | None = None,
    bound: float | None = None,
) -> TailCheck:
    """Empirical exceedance of the quadratic form against its stated bound.

    w may be a dense symmetric PSD matrix or a 1-d spectrum (the form is then
    a weighted sum of squares, same law by rotation invariance for the
    Gaussian family).  Passes iff the empirical exceedance is at most
    bound + 3 * sqrt(bound / n_samples).  Defaults: threshold is the
    deviation quantile squared, bound is e^{-x}.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    w_arr = np.asarray(w, dtype=float)
    if w_arr.ndim == 1:
        spec = spec_from_spectrum(w_arr)
        matrix = None
    else:
        spec = spec_from_operator(w_arr)
        matrix = check_spd_input(w_arr)
    z = deviation_quantile(spec, x)
    if threshold is None:
        threshold = z * z
    if bound is None:
        bound = math.exp(-x)

    dim = w_arr.shape[0] if matrix is not None else w_arr.size
    rng = rs.generator()
    exceed = 0
    remaining = n_samples
    while remaining > 0:
        block = min(remaining, 200_000)
        if family == "gaussian":
            xi = rng.standard_normal((block, dim))
        elif family == "rademacher":
            xi = rng.integers(0, 2, size=(block, dim)).astype(float) * 2.0 - 1.0
        else:
            raise ValueError(f"unknown family {family!r}")
        if matrix is None:
            q = (xi * xi) @ w_arr
        else:
            q = np.einsum("ni,ni->n", xi @ matrix, xi)
        exceed += int(np.count_nonzero(q > threshold))
        remaining -= block
    empirical = exceed / n_samples
    margin = bound + 3.0 * math.sqrt(bound / n_samples) - empirical
    return TailCheck(z, empirical, bound, margin, margin >= 0.0)


@dataclass(frozen=True)
class ChiSquareCheck:
    threshold: float
    probability: float
    bound: float
    ok: bool


def chi_square_bounds_check(p: int, x: float) -> list[ChiSquareCheck]:
    """Upper, norm, and lower tail inequalities for a chi-square(p) variable.

    Checked against scipy's chi2 distribution as the exact oracle:
      1. P(||g||^2 >= p + 2 sqrt(px) + 2x) <= e^{-x}
      2. P(||g||   >= sqrt(p) + sqrt(2x))  <= e^{-x}
      3. P(||g||^2 <= p - 2 sqrt(px))      <= e^{-x}
    """
    if p < 1 or x < 0.0:
        raise ValueError("need p >= 1 and x >= 0")
    bound = math.exp(-x)
    dist = scipy.stats.chi2(p)
    upper = p + 2.0 * math.sqrt(p * x) + 2.0 * x
    norm_thr = (math.sqrt(p) + math.sqrt(2.0 * x)) ** 2
    lower = p - 2.0 * math.sqrt(p * x)
    checks = []
    for thr, prob in (
        (upper, float(dist.sf(upper))),
        (norm_thr, float(dist.sf(norm_thr))),
        (lower, float(dist.cdf(lower)) if lower > 0.0 else 0.0),
    ):
        checks.append(ChiSquareCheck(thr, prob, bound, prob <= bound))
    return checks

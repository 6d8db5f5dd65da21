"""Closeness of the norm laws of two Gaussian vectors, one shifted.

The bound compares P(||xi - a|| <= r) with P(||eta|| <= r) uniformly in r
through the covariance spectra: an l1 gap of sorted eigenvalues plus the
squared shift, scaled by inverse tail-energy prefactors.  A Monte Carlo
Kolmogorov distance serves as the oracle for how tight that is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .numerics import DimensionMismatch, RandomSource, check_spd_input, sym_sqrt


class DegenerateSpectrum(Exception):
    """Fewer than two positive eigenvalues: the comparison prefactor diverges."""


def _sorted_spectrum(sigma: np.ndarray) -> np.ndarray:
    vals = scipy.linalg.eigvalsh(sigma, check_finite=False)
    if vals[0] < -1e-12 * max(1.0, float(vals[-1])):
        raise ValueError("covariance has a negative eigenvalue")
    return np.sort(np.clip(vals, 0.0, None))[::-1]


def _tail_energies(spectrum: np.ndarray) -> tuple[float, float]:
    """(A1, A2) with A_k^2 the sum of squared eigenvalues from the k-th down."""
    sq = spectrum**2
    a1 = float(np.sqrt(sq.sum()))
    a2 = float(np.sqrt(sq[1:].sum())) if spectrum.size > 1 else 0.0
    return a1, a2


@dataclass(frozen=True)
class NormComparisonCase:
    """Two centered Gaussian covariances and a shift applied to the first."""

    sigma_x: np.ndarray
    sigma_y: np.ndarray
    shift: np.ndarray
    spectrum_x: np.ndarray
    spectrum_y: np.ndarray
    a1_x: float
    a2_x: float
    a1_y: float
    a2_y: float

    @classmethod
    def build(cls, sigma_x, sigma_y, shift=None) -> "NormComparisonCase":
        sigma_x = check_spd_input(sigma_x)
        sigma_y = check_spd_input(sigma_y)
        if sigma_x.shape != sigma_y.shape:
            raise DimensionMismatch("covariances must share a dimension")
        dim = sigma_x.shape[0]
        shift = np.zeros(dim) if shift is None else np.asarray(shift, dtype=float)
        if shift.shape != (dim,):
            raise DimensionMismatch("shift must match the covariance dimension")
        spec_x = _sorted_spectrum(sigma_x)
        spec_y = _sorted_spectrum(sigma_y)
        a1_x, a2_x = _tail_energies(spec_x)
        a1_y, a2_y = _tail_energies(spec_y)
        return cls(sigma_x, sigma_y, shift, spec_x, spec_y, a1_x, a2_x, a1_y, a2_y)


@dataclass(frozen=True)
class ComparisonBound:
    general: float
    frobenius: float | None
    spectral_gap_l1: float
    shift_sq: float


def comparison_bound(case: NormComparisonCase) -> ComparisonBound:
    """Both bound expressions, without the unspecified absolute constant.

    The Frobenius variant is only reported when each covariance has at least
    three effective directions (three times the squared top eigenvalue is at
    most the squared Frobenius norm for both); otherwise it is None.
    """
    if case.a2_x <= 0.0 or case.a2_y <= 0.0:
        raise DegenerateSpectrum("need at least two positive eigenvalues per side")
    gap = float(np.abs(case.spectrum_x - case.spectrum_y).sum())
    shift_sq = float(case.shift @ case.shift)
    bracket = gap + shift_sq
    general = (
        1.0 / np.sqrt(case.a1_x * case.a2_x) + 1.0 / np.sqrt(case.a1_y * case.a2_y)
    ) * bracket
    frobenius = None
    if (
        3.0 * case.spectrum_x[0] ** 2 <= case.a1_x**2
        and 3.0 * case.spectrum_y[0] ** 2 <= case.a1_y**2
    ):
        frobenius = (1.0 / case.a1_x + 1.0 / case.a1_y) * bracket
    return ComparisonBound(float(general), frobenius, gap, shift_sq)


def _commute(sigma_x: np.ndarray, sigma_y: np.ndarray) -> bool:
    scale = max(1.0, float(np.abs(sigma_x).max() * np.abs(sigma_y).max()))
    return float(np.abs(sigma_x @ sigma_y - sigma_y @ sigma_x).max()) <= 1e-10 * scale


def mc_norm_kolmogorov(
    case: NormComparisonCase, n_samples: int, rs: RandomSource
) -> float:
    """Empirical Kolmogorov distance between ||xi - a|| and ||eta||.

    Uses a shared 512-point radius grid spanning both samples.  When the two
    covariances commute the same standard normal block drives both sides
    (common random numbers), which removes most of the MC noise from the
    difference without biasing either marginal.
    """
    if n_samples < 100_000:
        raise ValueError("n_samples must be at least 10^5")
    dim = case.sigma_x.shape[0]
    root_x = sym_sqrt(case.sigma_x)
    root_y = sym_sqrt(case.sigma_y)
    rng = rs.generator()
    crn = _commute(case.sigma_x, case.sigma_y)
    norms_x = np.empty(n_samples)
    norms_y = np.empty(n_samples)
    done = 0
    while done < n_samples:
        block = min(n_samples - done, 200_000)
        g1 = rng.standard_normal((block, dim))
        g2 = g1 if crn else rng.standard_normal((block, dim))
        norms_x[done : done + block] = np.linalg.norm(g1 @ root_x - case.shift, axis=1)
        norms_y[done : done + block] = np.linalg.norm(g2 @ root_y, axis=1)
        done += block
    norms_x.sort()
    norms_y.sort()
    lo = min(norms_x[0], norms_y[0])
    hi = max(norms_x[-1], norms_y[-1])
    grid = np.linspace(lo, hi, 512)
    cdf_x = np.searchsorted(norms_x, grid, side="right") / n_samples
    cdf_y = np.searchsorted(norms_y, grid, side="right") / n_samples
    return float(np.abs(cdf_x - cdf_y).max())

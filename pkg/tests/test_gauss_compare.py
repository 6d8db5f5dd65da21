import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from bvm_lab.gauss_compare import (
    DegenerateSpectrum,
    NormComparisonCase,
    comparison_bound,
    mc_norm_kolmogorov,
)
from bvm_lab.numerics import RandomSource


def rotation(dim, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    return q


class TestComparisonBound:
    def test_identical_laws_zero(self):
        sigma = np.diag([2.0, 1.0, 0.5])
        case = NormComparisonCase.build(sigma, sigma.copy())
        got = comparison_bound(case)
        assert got.general == 0.0
        # spectrum too peaked for the Frobenius gate (3*4 > 5.25)
        assert got.frobenius is None
        flat = 0.8 * np.eye(4)
        got_flat = comparison_bound(NormComparisonCase.build(flat, flat.copy()))
        assert got_flat.frobenius == 0.0

    def test_rotation_invariant_spectra(self):
        # same spectrum in different bases still gives zero bound
        q = rotation(4, 1)
        d = np.diag([3.0, 2.0, 1.0, 0.5])
        case = NormComparisonCase.build(q @ d @ q.T, d)
        assert comparison_bound(case).general == pytest.approx(0.0, abs=1e-10)

    def test_frozen_eigenvalue_gap_case(self):
        # identity vs diag(1,1,0.5): l1 gap 0.5, hand-evaluated prefactors
        case = NormComparisonCase.build(np.eye(3), np.diag([1.0, 1.0, 0.5]))
        got = comparison_bound(case)
        pref = 6.0 ** (-0.25) + (1.5 * math.sqrt(1.25)) ** (-0.5)
        assert got.general == pytest.approx(0.5 * pref, rel=1e-12)
        assert got.general == pytest.approx(0.706, abs=5e-4)

    def test_frozen_shift_case(self):
        # equal identity covariances, squared shift 0.1
        a = np.array([math.sqrt(0.1), 0.0])
        case = NormComparisonCase.build(np.eye(2), np.eye(2), a)
        got = comparison_bound(case)
        assert got.general == pytest.approx(0.2 / math.sqrt(math.sqrt(2.0)), rel=1e-12)
        assert got.general == pytest.approx(0.16818, abs=1e-5)
        # identity in dim 2 fails the three-direction gate
        assert got.frobenius is None

    def test_frobenius_present_for_flat_spectra(self):
        case = NormComparisonCase.build(np.eye(4), np.eye(4), np.array([0.5, 0, 0, 0]))
        got = comparison_bound(case)
        assert got.frobenius == pytest.approx(2.0 / 2.0 * 0.25, rel=1e-12)

    def test_degenerate_raises(self):
        case = NormComparisonCase.build(np.eye(1), np.eye(1))
        with pytest.raises(DegenerateSpectrum):
            comparison_bound(case)

    def test_rank_one_raises(self):
        case = NormComparisonCase.build(np.diag([1.0, 0.0]), np.eye(2))
        with pytest.raises(DegenerateSpectrum):
            comparison_bound(case)

    def test_monotone_in_shift(self):
        prev = -1.0
        for s in (0.0, 0.3, 0.7, 1.2):
            a = np.array([s, 0.0, 0.0])
            case = NormComparisonCase.build(np.eye(3), np.diag([1, 1, 0.8]), a)
            val = comparison_bound(case).general
            assert val > prev
            prev = val


@settings(max_examples=40, deadline=None)
@given(
    st.integers(3, 8),
    st.integers(0, 10_000),
    st.one_of(st.just(0.0), st.floats(1e-3, 1.0)),
)
def test_zero_iff_equal_property(dim, seed, shift_norm):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.2, 3.0, size=dim)
    q = rotation(dim, seed + 1)
    sigma = q @ np.diag(vals) @ q.T
    a = np.zeros(dim)
    a[0] = shift_norm
    case = NormComparisonCase.build(sigma, sigma.copy(), a)
    got = comparison_bound(case).general
    if shift_norm == 0.0:
        assert got <= 1e-10
    else:
        assert got > 0.0


class TestMcNormKolmogorov:
    def test_identical_case_noise_band(self):
        sigma = np.diag([2.0, 1.0, 0.5])
        case = NormComparisonCase.build(sigma, sigma.copy())
        d = mc_norm_kolmogorov(case, 100_000, RandomSource(21, (0,)))
        assert d <= 2.0 * 3.0 * math.sqrt(1.0 / 100_000)

    def test_one_dim_normal_cdf_oracle(self):
        case = NormComparisonCase.build(np.eye(1), np.eye(1), np.array([0.5]))
        d = mc_norm_kolmogorov(case, 400_000, RandomSource(22, (0,)))
        grid = np.linspace(0.0, 6.0, 4001)
        phi = scipy.stats.norm.cdf
        exact = np.abs(
            phi(grid - 0.5) - phi(-grid - 0.5) - (2.0 * phi(grid) - 1.0)
        ).max()
        assert d == pytest.approx(exact, abs=4.0 * math.sqrt(1.0 / 400_000))

    def test_swap_symmetry(self):
        sx = np.diag([1.5, 1.0])
        sy = np.diag([1.0, 0.7])
        d1 = mc_norm_kolmogorov(NormComparisonCase.build(sx, sy), 100_000, RandomSource(23, (0,)))
        d2 = mc_norm_kolmogorov(NormComparisonCase.build(sy, sx), 100_000, RandomSource(23, (0,)))
        assert d1 == pytest.approx(d2, abs=0.01)

    def test_sample_floor(self):
        case = NormComparisonCase.build(np.eye(2), np.eye(2))
        with pytest.raises(ValueError):
            mc_norm_kolmogorov(case, 50_000, RandomSource(24, (0,)))

    def test_distance_within_bound_times_constant(self):
        # a couple of moderate cases: MC distance should not wildly exceed
        # the bound expression (constant calibrated in the acceptance grid)
        rng = np.random.default_rng(25)
        for k in range(3):
            dim = 4 + k
            q1, q2 = rotation(dim, 100 + k), rotation(dim, 200 + k)
            s1 = q1 @ np.diag(rng.uniform(0.5, 2.0, dim)) @ q1.T
            s2 = q2 @ np.diag(rng.uniform(0.5, 2.0, dim)) @ q2.T
            a = rng.standard_normal(dim) * 0.2
            case = NormComparisonCase.build(s1, s2, a)
            bound = comparison_bound(case).general
            dist = mc_norm_kolmogorov(case, 100_000, RandomSource(26, (k,)))
            assert dist <= 3.0 * bound + 0.01

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvm_lab.numerics import DimensionMismatch
from bvm_lab.priors import (
    EffDim,
    PriorSpec,
    default_smooth_support,
    dimension_sandwich_check,
    effective_dimension,
    penalty_diagonal,
    precision,
    smooth_prior,
    tradeoff_w,
    truncation_prior,
)


def test_smooth_penalty_frozen_diagonal():
    # s=1, w=2 on three coordinates: 2*j^2
    prior = smooth_prior(1.0, 2.0, 3)
    np.testing.assert_allclose(penalty_diagonal(prior, 3), [2.0, 8.0, 18.0])
    np.testing.assert_allclose(precision(prior, 3), np.diag([2.0, 8.0, 18.0]))


def test_truncation_penalty_is_zero():
    prior = truncation_prior(4)
    np.testing.assert_array_equal(penalty_diagonal(prior, 10), np.zeros(4))


def test_penalty_clipped_to_ambient_dim():
    prior = smooth_prior(1.0, 1.0, 8)
    assert penalty_diagonal(prior, 5).shape == (5,)


def test_penalty_nondecreasing():
    prior = smooth_prior(0.75, 3.0, 20)
    d = penalty_diagonal(prior, 20)
    assert np.all(np.diff(d) > 0)


def test_prior_validation():
    with pytest.raises(ValueError):
        PriorSpec("truncation", 0)
    with pytest.raises(ValueError):
        PriorSpec("truncation", 3, smoothness=1.0)
    with pytest.raises(ValueError):
        smooth_prior(0.5, 1.0, 3)  # smoothness at the boundary
    with pytest.raises(ValueError):
        smooth_prior(1.0, -1.0, 3)
    with pytest.raises(ValueError):
        PriorSpec("ridge", 3)


def test_labels():
    assert truncation_prior(7).label() == "truncation(m=7)"
    assert smooth_prior(1.0, 2.0, 5).label() == "smooth(s=1,w=2,m=5)"


def test_effective_dimension_frozen_sum():
    # F = H^2 = 100 I_10, penalties 100 j^2: sum of 1/(1+j^2)
    f = 100.0 * np.eye(10)
    g_sq = 100.0 * np.arange(1, 11, dtype=float) ** 2
    eff = effective_dimension(f, g_sq, f)
    expected = sum(1.0 / (1.0 + j * j) for j in range(1, 11))
    assert eff.value == pytest.approx(expected, rel=1e-12)
    assert eff.value == pytest.approx(0.981793, abs=5e-7)
    assert eff.within_support_bound()


def test_effective_dimension_truncation_equals_support():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(6, 6))
    f = a @ a.T + 6.0 * np.eye(6)
    eff = effective_dimension(f, np.zeros(6), f)
    assert eff.value == pytest.approx(6.0, rel=1e-12)


def test_effective_dimension_matrix_and_vector_agree():
    f = np.diag([4.0, 3.0, 2.0])
    g = np.array([1.0, 2.0, 3.0])
    a = effective_dimension(f, g, f).value
    b = effective_dimension(f, np.diag(g), f).value
    assert a == b


def test_effective_dimension_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        effective_dimension(np.eye(3), np.zeros(4), np.eye(3))


def test_effdim_rejects_nonpositive():
    with pytest.raises(ValueError):
        EffDim(0.0, 3)
    with pytest.raises(ValueError):
        EffDim(float("nan"), 3)


def test_effective_dimension_decreasing_in_scale():
    f = 50.0 * np.eye(8)
    values = []
    for w in [0.5, 1.0, 2.0, 4.0, 8.0]:
        g = penalty_diagonal(smooth_prior(1.0, w, 8), 8)
        values.append(effective_dimension(f, g, f).value)
    assert all(a > b for a, b in zip(values, values[1:]))


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=1, max_value=6),
    st.floats(min_value=0.6, max_value=3.0),
    st.floats(min_value=0.1, max_value=50.0),
)
def test_effective_dimension_within_support(m, s, w):
    # with H^2 = F the ratio operator is a contraction, so value <= m
    f = 30.0 * np.eye(m)
    g = penalty_diagonal(smooth_prior(s, w, m), m)
    eff = effective_dimension(f, g, f)
    assert 0.0 < eff.value <= m + 1e-9
    assert eff.within_support_bound()


def test_sandwich_truncation_identity_curvature():
    n = 200
    f = n * np.eye(5)
    rep = dimension_sandwich_check(f, truncation_prior(5), f, n)
    assert rep.ok
    assert rep.value == pytest.approx(5.0, rel=1e-12)
    assert rep.lower == pytest.approx(5.0)
    assert rep.upper == 5.0


def test_sandwich_truncation_anisotropic():
    n = 100
    f = np.diag([80.0, 120.0, 150.0])
    rep = dimension_sandwich_check(f, truncation_prior(3), f, n)
    assert rep.ok
    assert rep.value == pytest.approx(3.0, rel=1e-12)
    assert rep.lower == pytest.approx(3.0 * 0.8 / 1.5)


def test_sandwich_smooth_brackets():
    n = 500
    for w in [0.2, 1.0, 5.0, 40.0]:
        f = n * np.eye(12)
        rep = dimension_sandwich_check(f, smooth_prior(1.0, w, 12), f, n)
        assert rep.ok, (w, rep)
        assert rep.lower <= rep.value <= rep.upper
        assert 1 <= rep.level <= 12


def test_sandwich_large_scale_limit():
    # penalties all above n: level pinned at 1, both ends collapse toward 0/1
    n = 64
    f = n * np.eye(6)
    rep = dimension_sandwich_check(f, smooth_prior(1.0, 1e6, 6), f, n)
    assert rep.ok
    assert rep.level == 1
    assert rep.lower < 1e-4
    assert rep.value < 1e-3
    assert rep.upper < 1.1


def test_tradeoff_frozen():
    t = tradeoff_w(1024, 1.0)
    assert t.scale == pytest.approx(1024.0 ** (1.0 / 3.0), rel=1e-12)
    assert t.scale == pytest.approx(10.0794, abs=1e-4)
    assert t.level == 11


def test_tradeoff_high_smoothness_limit():
    assert tradeoff_w(1024, 50.0).scale == pytest.approx(1.0, abs=0.08)
    with pytest.raises(ValueError):
        tradeoff_w(1024, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=16, max_value=100000), st.floats(min_value=0.6, max_value=4.0))
def test_tradeoff_balances(n, s):
    t = tradeoff_w(n, s)
    # defining identity w^(2s+1) = n, and the level rounds w up
    assert t.scale ** (2.0 * s + 1.0) == pytest.approx(n, rel=1e-9)
    assert t.level == math.ceil((n / t.scale) ** (1.0 / (2.0 * s)))


def test_default_smooth_support():
    assert default_smooth_support(2000) == 2
    assert default_smooth_support(3) >= 1
    with pytest.raises(ValueError):
        default_smooth_support(2)

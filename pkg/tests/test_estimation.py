import math

import numpy as np
import pytest

from bvm_lab.estimation import (
    NotConverged,
    bias_terms,
    concentration_radius,
    default_probes,
    diamond,
    directional_taylor,
    fisher_expansion_residual,
    fit_pmle,
    fit_target,
    parse_record,
    select_r0,
    serialize_fit,
    serialize_truth,
    tau_surrogate,
    wilks_residual,
)
from bvm_lab.models import GaussSeqModel, GlmModel, LogDensityModel, sobolev_truth
from bvm_lab.numerics import RandomSource, sym_opnorm, sym_sqrt
from bvm_lab.priors import smooth_prior, truncation_prior


def ridge_fit_oracle(model, data, penalty):
    # closed form for the quadratic sequence model
    return data.suff / (model.n + penalty)


def make_seq_setup(n=40, dim=5, w=2.0, seed=11):
    model = GaussSeqModel(dim, n)
    truth = sobolev_truth(dim, 1.0)
    data = model.sample_data(truth, RandomSource(seed))
    prior = smooth_prior(1.0, w, dim)
    return model, truth, data, prior


def test_fit_matches_ridge_closed_form():
    model, truth, data, prior = make_seq_setup()
    fit = fit_pmle(model, data, prior)
    penalty = 2.0 * np.arange(1, 6, dtype=float) ** 2
    np.testing.assert_allclose(fit.theta, ridge_fit_oracle(model, data, penalty), atol=1e-8)
    np.testing.assert_allclose(fit.precision_sq, np.diag(model.n + penalty))
    assert fit.grad_norm <= 1e-9


def test_fit_logistic_against_gradient_ascent():
    n, dim = 60, 3
    model = GlmModel.equispaced("logistic", dim, n)
    data = model.sample_data(sobolev_truth(dim, 1.0), RandomSource(3))
    prior = truncation_prior(dim)
    fit = fit_pmle(model, data, prior)
    # fixed-step ascent oracle; step below 2 / (n/4) keeps it stable
    theta = np.zeros(dim)
    step = 2.0 / n
    for _ in range(100_000):
        theta = theta + step * model.grad_log_lik(data, theta)
    np.testing.assert_allclose(fit.theta, theta, atol=1e-6)


def test_warm_restart_is_a_fixed_point():
    model, truth, data, prior = make_seq_setup()
    fit = fit_pmle(model, data, prior)
    again = fit_pmle(model, data, prior, theta_init=fit.theta)
    assert again.iterations <= 1
    np.testing.assert_allclose(again.theta, fit.theta, atol=1e-12)


def test_fit_not_converged_at_zero_budget():
    model, truth, data, prior = make_seq_setup()
    with pytest.raises(NotConverged):
        fit_pmle(model, data, prior, max_iter=0)


def test_fit_rejects_bad_init_length():
    model, truth, data, prior = make_seq_setup()
    with pytest.raises(ValueError):
        fit_pmle(model, data, prior, theta_init=np.zeros(2))


def test_fit_from_remote_start_still_converges():
    n, dim = 80, 4
    model = GlmModel.equispaced("logistic", dim, n)
    data = model.sample_data(sobolev_truth(dim, 1.0), RandomSource(9))
    prior = truncation_prior(dim)
    far = 3.0 * np.ones(dim)
    fit = fit_pmle(model, data, prior, theta_init=far)
    base = fit_pmle(model, data, prior)
    np.testing.assert_allclose(fit.theta, base.theta, atol=1e-7)
    assert fit.objective >= model.log_lik(data, far) - 1e-12


def test_target_ridge_closed_form():
    model, truth, data, prior = make_seq_setup()
    ctx = fit_target(model, prior, truth, data=data)
    penalty = 2.0 * np.arange(1, 6, dtype=float) ** 2
    expected = model.n * truth / (model.n + penalty)
    np.testing.assert_allclose(ctx.theta_star_g, expected, atol=1e-9)
    assert ctx.target_grad_norm <= 1e-9


def test_target_without_penalty_recovers_truth():
    dim, n = 4, 500
    model = LogDensityModel(dim, n, n_nodes=512)
    truth = sobolev_truth(dim, 1.0)
    ctx = fit_target(model, truncation_prior(dim), truth)
    np.testing.assert_allclose(ctx.theta_star_g, truth, atol=1e-7)


def test_target_heavy_penalty_shrinks_to_zero():
    model, truth, data, _ = make_seq_setup()
    ctx = fit_target(model, smooth_prior(1.0, 1e8, 5), truth)
    assert np.abs(ctx.theta_star_g).max() < 1e-4


def test_truth_context_validation():
    model, truth, data, prior = make_seq_setup()
    with pytest.raises(ValueError):
        fit_target(model, prior, truth, noise_scale=0.5)
    ctx = fit_target(model, prior, truth, noise_scale=1.5)
    gap = np.linalg.eigvalsh(ctx.noise_cov - ctx.score_cov).min()
    assert gap >= 0.0


def test_fisher_expansion_exact_on_quadratic():
    model, truth, data, prior = make_seq_setup()
    fit = fit_pmle(model, data, prior)
    ctx = fit_target(model, prior, truth, data=data)
    assert fisher_expansion_residual(fit, ctx) < 1e-8


def test_fisher_expansion_requires_noise():
    model, truth, data, prior = make_seq_setup()
    fit = fit_pmle(model, data, prior)
    ctx = fit_target(model, prior, truth)
    with pytest.raises(ValueError):
        fisher_expansion_residual(fit, ctx)


def test_wilks_exact_on_quadratic():
    model, truth, data, prior = make_seq_setup()
    fit = fit_pmle(model, data, prior)
    ctx = fit_target(model, prior, truth, data=data)
    rep = wilks_residual(model, fit, ctx, data)
    assert rep.primary < 1e-8
    assert rep.quadratic_gap < 1e-8
    assert rep.fitted_quadratic_gap < 1e-8
    assert rep.operator_gap < 1e-10
    assert rep.excess >= 0.0


def test_wilks_logistic_residuals_small():
    n, dim = 1000, 8
    model = GlmModel.equispaced("logistic", dim, n)
    truth = sobolev_truth(dim, 1.0)
    data = model.sample_data(truth, RandomSource(17))
    prior = truncation_prior(dim)
    fit = fit_pmle(model, data, prior)
    ctx = fit_target(model, prior, truth, data=data)
    rep = wilks_residual(model, fit, ctx, data)
    resid = fisher_expansion_residual(fit, ctx)
    assert 0.0 < resid < 1.0
    assert rep.primary < 1.0
    # curvature gap recomputation with dense eigenvalues must agree
    d_inv = np.linalg.inv(sym_sqrt(ctx.curvature_sq))
    m = d_inv @ (fit.precision_sq - ctx.curvature_sq) @ d_inv
    dense = float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T))).max())
    assert rep.operator_gap == pytest.approx(dense, abs=1e-9)


def test_bias_vanishes_without_penalty():
    dim, n = 4, 400
    model = LogDensityModel(dim, n, n_nodes=512)
    truth = sobolev_truth(dim, 1.0)
    ctx = fit_target(model, truncation_prior(dim), truth)
    rep = bias_terms(ctx, np.eye(dim))
    assert rep.pull == 0.0
    assert rep.shift < 1e-6
    assert rep.defect < 1e-5
    assert rep.r_b == 0.0


def test_bias_defect_exact_on_quadratic():
    model, truth, data, prior = make_seq_setup()
    ctx = fit_target(model, prior, truth)
    rep = bias_terms(ctx, np.eye(5))
    assert rep.defect < 1e-9
    assert rep.shift > 0.0
    assert rep.shift == pytest.approx(rep.pull, rel=1e-6)


def test_bias_bound_holds_on_log_density():
    dim, n = 6, 800
    model = LogDensityModel(dim, n, n_nodes=512)
    truth = sobolev_truth(dim, 1.0)
    prior = smooth_prior(1.0, 3.0, dim)
    ctx = fit_target(model, prior, truth)
    r_b = bias_terms(ctx, np.eye(dim)).r_b
    tau3 = tau_surrogate(
        model, [ctx.theta_star_g], ctx.noise_cov, max(r_b, 0.1), 3,
        RandomSource(5), n_directions=64,
    )
    rep = bias_terms(ctx, np.eye(dim), tau3=tau3)
    assert rep.bound is not None
    assert rep.shift <= rep.bound + 1e-12
    assert rep.defect**2 <= 4.0 * rep.r_b**3 * max(tau3, 1e-12) + 1e-6


def test_q_matrix_shape_checked():
    model, truth, data, prior = make_seq_setup()
    ctx = fit_target(model, prior, truth)
    with pytest.raises(ValueError):
        bias_terms(ctx, np.eye(3))


def test_directional_taylor_delegates():
    model = GaussSeqModel(3, 10)
    assert directional_taylor(model, np.zeros(3), np.ones(3), 3) == 0.0


def test_tau_zero_on_quadratic_and_at_logistic_origin():
    model, truth, data, prior = make_seq_setup()
    rs = RandomSource(2)
    assert tau_surrogate(model, [np.zeros(5)], np.eye(5), 2.0, 3, rs) == 0.0
    glm = GlmModel.equispaced("logistic", 4, 100)
    h = glm.fisher(np.zeros(4))
    assert tau_surrogate(glm, [np.zeros(4)], h, 2.0, 3, rs) == 0.0
    assert tau_surrogate(glm, [np.zeros(4)], h, 2.0, 4, rs) > 0.0


def test_tau_argument_validation():
    model = GaussSeqModel(3, 10)
    with pytest.raises(ValueError):
        tau_surrogate(model, [np.zeros(3)], np.eye(3), 1.0, 3, RandomSource(1), n_directions=32)
    with pytest.raises(ValueError):
        tau_surrogate(model, [np.zeros(3)], np.eye(3), 0.0, 3, RandomSource(1))


def test_tau_direction_count_stability():
    dim, n = 8, 1000
    model = LogDensityModel(dim, n, n_nodes=512)
    truth = sobolev_truth(dim, 1.0)
    ctx = fit_target(model, truncation_prior(dim), truth)
    args = (model, [ctx.theta_star_g], ctx.noise_cov, 5.0, 3)
    a = tau_surrogate(*args, RandomSource(7), n_directions=128)
    b = tau_surrogate(*args, RandomSource(8), n_directions=256)
    assert a > 0.0 and b > 0.0
    assert 0.7 <= a / b <= 1.3


def test_glm_tau_sample_size_scaling():
    # remainder constants follow n^{1 - k/2} on a doubling design
    dim = 4
    truth = sobolev_truth(dim, 1.0)
    for k in (3, 4):
        values = []
        for n in (400, 800):
            model = GlmModel.equispaced("poisson", dim, n)
            h = model.fisher(truth)
            values.append(
                tau_surrogate(model, [truth], h, 3.0, k, RandomSource(21), n_directions=128)
            )
        ratio = values[1] / values[0]
        law = 2.0 ** (1.0 - k / 2.0)
        assert 0.5 * law <= ratio <= 2.0 * law, (k, ratio)


def test_radius_identity_noise():
    model = GaussSeqModel(4, 50)
    truth = sobolev_truth(4, 1.0)
    ctx = fit_target(model, truncation_prior(4), truth)
    rep = concentration_radius(ctx, 0.0)
    assert rep.radius == pytest.approx(2.0 * 2.0)  # 2 sqrt(m), m = 4
    rep2 = concentration_radius(ctx, 3.0)
    assert rep2.radius == pytest.approx(2.0 * (2.0 + math.sqrt(6.0)))
    assert rep2.trace == pytest.approx(4.0)
    assert rep2.opnorm == pytest.approx(1.0)
    assert rep2.contraction is None and rep2.ok is None
    gated = concentration_radius(ctx, 3.0, tau3=0.001)
    assert gated.ok is True


def test_radius_covers_replications():
    # 200 draws of the quadratic model stay inside the radius at x = log 200
    n, dim = 50, 6
    model = GaussSeqModel(dim, n)
    truth = sobolev_truth(dim, 1.0)
    prior = smooth_prior(1.0, 1.0, dim)
    ctx = fit_target(model, prior, truth)
    rep = concentration_radius(ctx, math.log(200.0))
    d = sym_sqrt(ctx.curvature_sq)
    hits = 0
    for r in range(200):
        data = model.sample_data(truth, RandomSource(1000, stream=(r,)))
        fit = fit_pmle(model, data, prior)
        if np.linalg.norm(d @ (fit.theta - ctx.theta_star_g)) <= rep.radius:
            hits += 1
    assert hits >= 198


def test_diamond_frozen_value():
    rep = diamond(2.0, 0.01, 0.001)
    assert rep.composite == pytest.approx(0.0896, rel=1e-12)
    assert rep.leading == pytest.approx(0.94)
    assert rep.ok


def test_diamond_zero_and_scaling():
    assert diamond(3.0, 0.0, 0.0).composite == 0.0
    lo = diamond(1.5, 0.02, 0.003)
    hi = diamond(3.0, 0.02, 0.003)
    ratio = hi.composite / lo.composite
    assert 16.0 <= ratio <= 64.0
    with pytest.raises(ValueError):
        diamond(-1.0, 0.1, 0.1)


def test_select_r0_frozen():
    model = GaussSeqModel(4, 50)
    truth = sobolev_truth(4, 1.0)
    ctx = fit_target(model, truncation_prior(4), truth)
    # effective dimension 4, x = 0: 2 sqrt(5)
    assert select_r0(ctx, x=0.0) == pytest.approx(2.0 * math.sqrt(5.0), rel=1e-12)
    assert select_r0(ctx, x=4.0) == pytest.approx(2.0 * math.sqrt(5.0) + 2.0)
    assert select_r0(ctx, x=0.0, extra_dims=[8.0]) == pytest.approx(6.0)
    assert select_r0(ctx) > select_r0(ctx, x=0.0)


def test_default_probes_stay_local():
    model, truth, data, prior = make_seq_setup()
    fit = fit_pmle(model, data, prior)
    ctx = fit_target(model, prior, truth, data=data)
    probes = default_probes(fit, ctx, RandomSource(4))
    assert len(probes) == 8
    d = sym_sqrt(ctx.curvature_sq)
    for theta in probes[2:]:
        assert np.linalg.norm(d @ (theta - ctx.theta_star_g)) <= ctx.radius / 2.0 + 1e-9


def test_serialization_round_trip():
    model, truth, data, prior = make_seq_setup()
    fit = fit_pmle(model, data, prior)
    ctx = fit_target(model, prior, truth, data=data)
    rec = parse_record(serialize_fit(fit))
    np.testing.assert_array_equal(rec["theta"], fit.theta)
    np.testing.assert_array_equal(rec["precision_sq"], fit.precision_sq)
    assert rec["iterations"] == fit.iterations
    trec = parse_record(serialize_truth(ctx))
    np.testing.assert_array_equal(trec["theta_star_g"], ctx.theta_star_g)
    np.testing.assert_array_equal(trec["score_noise"], ctx.score_noise)
    assert trec["n"] == ctx.n
    ctx2 = fit_target(model, prior, truth)
    assert parse_record(serialize_truth(ctx2))["score_noise"] is None

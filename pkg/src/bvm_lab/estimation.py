"""Penalized maximum likelihood and finite-sample expansion diagnostics.

The solver is a damped Newton iteration on the penalized log-likelihood
restricted to the prior support.  Around the fitted point the module measures
the quantities the finite-sample theory controls: the score expansion residual
of the estimator, the excess-likelihood (Wilks) residuals, the penalty bias
decomposition, sampled surrogates for the cubic and quartic remainder
constants, and the concentration radius with its side conditions.

Everything here is deterministic given its inputs; replications differ only
through the dataset and the RandomSource handed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import RandomSource, spd_factor, sym_opnorm, sym_sqrt, trace_solve
from .priors import PriorSpec, penalty_diagonal
from .tail_bounds import deviation_quantile_simple

SOLVER_TOL = 1e-9
MAX_ITER = 100
MAX_BACKTRACKS = 60
ARMIJO = 1e-4


class NotConverged(RuntimeError):
    """Newton iteration hit its cap without meeting the gradient tolerance."""

    def __init__(self, message: str, iterations: int, grad_norm: float):
        super().__init__(f"{message} (iterations={iterations}, grad_norm={grad_norm:.3e})")
        self.iterations = iterations
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class FitResult:
    """Penalized MLE on the prior support with its local geometry.

    theta has the support length; precision_sq is the penalized curvature
    F(theta) + G^2 at the solution; grad_norm is the precision-weighted
    gradient norm the solver converged under.
    """

    theta: np.ndarray
    precision_sq: np.ndarray
    grad_norm: float
    iterations: int
    backtracks: int
    objective: float
    penalty_diag: np.ndarray

    @property
    def support(self) -> int:
        return self.theta.size


def _penalized_value(model, data, theta, penalty):
    return model.log_lik(data, theta) - 0.5 * float(penalty @ (theta * theta))


def _penalized_grad(model, data, theta, penalty):
    return model.grad_log_lik(data, theta) - penalty * theta


def _newton(model, data, penalty, theta_init, tol, max_iter):
    theta = np.array(theta_init, dtype=float)
    value = _penalized_value(model, data, theta, penalty)
    total_backtracks = 0
    for it in range(max_iter):
        grad = _penalized_grad(model, data, theta, penalty)
        curv = model.fisher(theta) + np.diag(penalty)
        factor = spd_factor(curv)
        grad_norm = math.sqrt(float(factor.quad_form_inv(grad)))
        if grad_norm <= tol:
            return theta, curv, grad_norm, it, total_backtracks, value
        step = factor.solve(grad)
        slope = float(grad @ step)
        # once the predicted gain drops under float resolution of the
        # objective, the ascent test is pure rounding noise; take the plain
        # Newton step, the gradient check above decides convergence
        noise_floor = 16.0 * np.finfo(float).eps * (1.0 + abs(value))
        if slope <= noise_floor:
            cand = theta + step
            cand_value = _penalized_value(model, data, cand, penalty)
            if not np.isfinite(cand_value):
                raise NotConverged("objective lost finiteness at the stall", it, grad_norm)
        else:
            alpha = 1.0
            for _ in range(MAX_BACKTRACKS):
                cand = theta + alpha * step
                cand_value = _penalized_value(model, data, cand, penalty)
                if np.isfinite(cand_value) and cand_value >= value + ARMIJO * alpha * slope:
                    break
                alpha *= 0.5
                total_backtracks += 1
            else:
                raise NotConverged("line search found no ascent", it, grad_norm)
        theta, value = cand, cand_value
    grad = _penalized_grad(model, data, theta, penalty)
    curv = model.fisher(theta) + np.diag(penalty)
    factor = spd_factor(curv)
    grad_norm = math.sqrt(float(factor.quad_form_inv(grad)))
    if grad_norm <= tol:
        return theta, curv, grad_norm, max_iter, total_backtracks, value
    raise NotConverged("iteration cap reached", max_iter, grad_norm)


def fit_pmle(
    model,
    data,
    prior: PriorSpec,
    theta_init: np.ndarray | None = None,
    tol: float = SOLVER_TOL,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Maximize log_lik(theta) - penalty(theta) over the prior support.

    Damped Newton with backtracking halving line search; the start is the
    origin unless theta_init is given.  Raises NotConverged past max_iter.
    """
    penalty = penalty_diagonal(prior, model.dim)
    support = penalty.size
    if theta_init is None:
        theta_init = np.zeros(support)
    theta_init = np.asarray(theta_init, dtype=float)
    if theta_init.size != support:
        raise ValueError("theta_init length must equal the prior support")
    theta, curv, grad_norm, its, bts, value = _newton(
        model, data, penalty, theta_init, tol, max_iter
    )
    return FitResult(theta, curv, grad_norm, its, bts, value, penalty)


@dataclass(frozen=True)
class TruthContext:
    """Population-side quantities for a synthetic experiment.

    theta_star is the ambient truth, theta_star_g its penalized population
    target on the support.  curvature_sq is F(theta_star_g) + G^2 there,
    score_cov the variance of the support score, noise_cov its calibration
    upper bound (equal under correct specification), score_noise the realized
    centered score S - ES when a dataset was supplied, radius the default
    concentration radius at x = 2 log n.
    """

    theta_star: np.ndarray
    theta_star_g: np.ndarray
    curvature_sq: np.ndarray
    score_cov: np.ndarray
    noise_cov: np.ndarray
    score_noise: np.ndarray | None
    radius: float
    penalty_diag: np.ndarray
    n: int
    target_grad_norm: float

    def __post_init__(self):
        gap = np.linalg.eigvalsh(self.noise_cov - self.score_cov).min()
        scale = sym_opnorm(self.score_cov)
        if gap < -1e-8 * max(scale, 1.0):
            raise ValueError("noise calibration must dominate the score variance")

    @property
    def support(self) -> int:
        return self.theta_star_g.size


def _whitened_noise(curvature_sq: np.ndarray, noise_cov: np.ndarray) -> np.ndarray:
    h = sym_sqrt(noise_cov)
    b = h @ np.linalg.solve(curvature_sq, h)
    return 0.5 * (b + b.T)


def score_matrix(truth: TruthContext) -> np.ndarray:
    """B = H D^{-2} H, the operator whose quantiles size the radius."""
    return _whitened_noise(truth.curvature_sq, truth.noise_cov)


def fit_target(
    model,
    prior: PriorSpec,
    theta_star: np.ndarray,
    data=None,
    noise_scale: float = 1.0,
    x: float | None = None,
    tol: float = SOLVER_TOL,
) -> TruthContext:
    """Deterministic counterpart of fit_pmle on the expectation dataset.

    noise_scale >= 1 inflates the calibration operator relative to the score
    variance (1 under correct specification).  When data is given, the
    realized centered score is stored for expansion residuals.
    """
    if noise_scale < 1.0:
        raise ValueError("noise_scale must be >= 1")
    expectation = model.expectation_dataset(theta_star)
    fit = fit_pmle(model, expectation, prior, tol=tol)
    support = fit.support
    v_sq = model.fisher(np.asarray(theta_star, dtype=float), out_dim=support)
    h_sq = noise_scale**2 * v_sq
    noise = None
    if data is not None:
        noise = model.grad_log_lik(data, fit.theta) - model.grad_log_lik(
            expectation, fit.theta
        )
    if x is None:
        x = 2.0 * math.log(model.n)
    from .models import pad_to

    b = _whitened_noise(fit.precision_sq, h_sq)
    trace = float(np.trace(b))
    opnorm = float(np.linalg.eigvalsh(b).max())
    radius = 2.0 * deviation_quantile_simple(trace, opnorm, x)
    return TruthContext(
        pad_to(theta_star, model.dim),
        fit.theta,
        fit.precision_sq,
        v_sq,
        h_sq,
        noise,
        radius,
        fit.penalty_diag,
        model.n,
        fit.grad_norm,
    )


def _require_noise(truth: TruthContext) -> np.ndarray:
    if truth.score_noise is None:
        raise ValueError("truth context was built without a dataset")
    return truth.score_noise


def fisher_expansion_residual(fit: FitResult, truth: TruthContext) -> float:
    """Norm of D(theta_hat - target) - D^{-1} (S - ES).

    The theory bounds the square of this by 4 r^3 tau3; the bound assembly
    lives with the harness since tau3 is a sampled surrogate.
    """
    noise = _require_noise(truth)
    d = sym_sqrt(truth.curvature_sq)
    lead = d @ (fit.theta - truth.theta_star_g)
    return float(np.linalg.norm(lead - np.linalg.solve(d, noise)))


@dataclass(frozen=True)
class WilksReport:
    """Excess-likelihood residuals and the curvature operator gap.

    primary compares the excess to half the squared weighted score;
    quadratic_gap to the population quadratic form at the target;
    fitted_quadratic_gap to the fitted quadratic form; operator_gap is the
    relative distance between fitted and population curvature.
    """

    primary: float
    quadratic_gap: float
    fitted_quadratic_gap: float
    operator_gap: float
    excess: float


def wilks_residual(model, fit: FitResult, truth: TruthContext, data) -> WilksReport:
    noise = _require_noise(truth)
    penalty = fit.penalty_diag
    excess = _penalized_value(model, data, fit.theta, penalty) - _penalized_value(
        model, data, truth.theta_star_g, penalty
    )
    factor = spd_factor(truth.curvature_sq)
    half_score = 0.5 * float(factor.quad_form_inv(noise))
    diff = fit.theta - truth.theta_star_g
    half_quad = 0.5 * float(diff @ truth.curvature_sq @ diff)
    half_fitted = 0.5 * float(diff @ fit.precision_sq @ diff)
    d_inv = np.linalg.inv(sym_sqrt(truth.curvature_sq))
    gap = sym_opnorm(d_inv @ (fit.precision_sq - truth.curvature_sq) @ d_inv)
    return WilksReport(
        abs(excess - half_score),
        abs(excess - half_quad),
        abs(excess - half_fitted),
        gap,
        excess,
    )


@dataclass(frozen=True)
class BiasReport:
    """Penalty-induced shift of the population target, Q-weighted.

    pull is the explicit first-order term |Q D^{-2} G^2 theta*|; shift the
    actual |Q(target - truth)|; defect the weighted gap between them whose
    square the theory bounds by 4 r_b^3 tau3(r_b); bound is the full
    right-hand side for shift when tau3 was supplied.
    """

    pull: float
    shift: float
    defect: float
    r_b: float
    bound: float | None


def bias_terms(truth: TruthContext, q_matrix: np.ndarray, tau3: float | None = None) -> BiasReport:
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    support = truth.support
    if q.shape[1] != support:
        raise ValueError("Q must act on the support coordinates")
    theta_supp = truth.theta_star[:support]
    g2_theta = truth.penalty_diag * theta_supp
    shift_vec = truth.theta_star_g - theta_supp
    d_sq = truth.curvature_sq
    pull = float(np.linalg.norm(q @ np.linalg.solve(d_sq, g2_theta)))
    shift = float(np.linalg.norm(q @ shift_vec))
    d = sym_sqrt(d_sq)
    defect = float(np.linalg.norm(d @ (-shift_vec) - np.linalg.solve(d, g2_theta)))
    r_b = math.sqrt(2.0) * math.sqrt(float(theta_supp @ g2_theta))
    bound = None
    if tau3 is not None:
        sandwich = sym_opnorm(q @ np.linalg.solve(d_sq, q.T))
        bound = pull + 2.0 * math.sqrt(sandwich * r_b**3 * tau3)
    return BiasReport(pull, shift, defect, r_b, bound)


def directional_taylor(model, theta: np.ndarray, u: np.ndarray, k: int) -> float:
    """Third or fourth directional Taylor coefficient of the mean objective."""
    return model.taylor_coefficient(theta, u, k)


def tau_surrogate(
    model,
    theta_probes,
    h_sq: np.ndarray,
    r: float,
    k: int,
    rs: RandomSource,
    n_directions: int = 64,
) -> float:
    """Sampled stand-in for the remainder constant of order k at radius r.

    Maximizes r^{-k} |directional coefficient| over the probe parameters and
    n_directions random directions on the calibration ellipsoid of radius r.
    A lower bound for the true supremum; callers must treat checks built on
    it as soft.
    """
    if n_directions < 64:
        raise ValueError("n_directions must be >= 64")
    if r <= 0.0:
        raise ValueError("radius must be positive")
    factor = spd_factor(np.asarray(h_sq, dtype=float))
    dim = factor.dim
    rng = rs.generator()
    best = 0.0
    raw = rng.standard_normal((n_directions, dim))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    directions = r * np.apply_along_axis(factor.inv_factor_t_matvec, 1, raw)
    for theta in theta_probes:
        theta = np.asarray(theta, dtype=float)
        for u in directions:
            best = max(best, abs(model.taylor_coefficient(theta, u, k)))
    return best / r**k


def default_probes(
    fit: FitResult, truth: TruthContext, rs: RandomSource, n_extra: int = 6
) -> list:
    """Probe parameters for the remainder surrogate.

    The target and the fit, plus n_extra random interior points of the
    concentration neighborhood (curvature-whitened ball of half the radius).
    """
    factor = spd_factor(truth.curvature_sq)
    rng = rs.generator()
    probes = [truth.theta_star_g, fit.theta]
    for _ in range(n_extra):
        xi = rng.standard_normal(truth.support)
        nrm = np.linalg.norm(xi)
        if nrm > 0:
            xi *= rng.random() * truth.radius / 2.0 / nrm
        probes.append(truth.theta_star_g + factor.inv_factor_t_matvec(xi))
    return probes


@dataclass(frozen=True)
class RadiusReport:
    """Concentration radius with the side conditions that license it."""

    radius: float
    quantile: float
    trace: float
    opnorm: float
    contraction: float | None
    ok: bool | None


def concentration_radius(truth: TruthContext, x: float, tau3: float | None = None) -> RadiusReport:
    """Radius 2 z(B, x) for B = H D^{-2} H, with condition checks.

    The licensing conditions ask for a contraction factor rho with
    3 r tau3 <= rho <= 1/2 and (1 - rho) r >= z; with r = 2z the second
    holds for any rho <= 1/2, so the report reduces to 3 r tau3 <= 1/2.
    """
    b = score_matrix(truth)
    trace = float(np.trace(b))
    opnorm = float(np.linalg.eigvalsh(b).max())
    z = deviation_quantile_simple(trace, opnorm, x)
    radius = 2.0 * z
    contraction = None if tau3 is None else 3.0 * radius * tau3
    ok = None if contraction is None else bool(contraction <= 0.5)
    return RadiusReport(radius, z, trace, opnorm, contraction, ok)


@dataclass(frozen=True)
class RemainderBudget:
    """Remainder constants with the composite smallness certificate.

    composite = 4 r0^6 tau3^2 + 4 r0^4 tau4; leading = 1 - 3 r0 tau3.  The
    posterior approximation results need composite <= 1/2 and leading >= 1/2.
    surrogate records that the constants came from sampled maxima.
    """

    tau3: float
    tau4: float
    r0: float
    composite: float
    leading: float
    ok: bool
    surrogate: bool = True

    def __post_init__(self):
        if self.tau3 < 0.0 or self.tau4 < 0.0 or self.r0 < 0.0:
            raise ValueError("remainder inputs must be nonnegative")


def diamond(r0: float, tau3: float, tau4: float) -> RemainderBudget:
    value = 4.0 * r0**6 * tau3**2 + 4.0 * r0**4 * tau4
    leading = 1.0 - 3.0 * r0 * tau3
    ok = value <= 0.5 and leading >= 0.5
    return RemainderBudget(tau3, tau4, r0, value, leading, ok)


def select_r0(
    truth: TruthContext, x: float | None = None, extra_dims=(), c0: float = 1.0
) -> float:
    """Integration radius (2 sqrt(p+1) + sqrt(x)) / c0.

    p is the effective dimension tr{H^2 D^{-2}} at the target, maximized with
    any extra probe values handed in; default x is 2 log n.
    """
    if x is None:
        x = 2.0 * math.log(truth.n)
    p_hat = trace_solve(truth.curvature_sq, truth.noise_cov)
    for v in extra_dims:
        p_hat = max(p_hat, float(v))
    return (2.0 * math.sqrt(p_hat + 1.0) + math.sqrt(x)) / c0


def _fmt_vector(v: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in np.asarray(v, dtype=float).ravel())


def _fmt_matrix(m: np.ndarray) -> str:
    return ";".join(_fmt_vector(row) for row in np.asarray(m, dtype=float))


def serialize_fit(fit: FitResult) -> str:
    lines = [
        f"theta={_fmt_vector(fit.theta)}",
        f"precision_sq={_fmt_matrix(fit.precision_sq)}",
        f"grad_norm={fit.grad_norm!r}",
        f"iterations={fit.iterations}",
        f"backtracks={fit.backtracks}",
        f"objective={fit.objective!r}",
        f"penalty_diag={_fmt_vector(fit.penalty_diag)}",
    ]
    return "\n".join(lines) + "\n"


def serialize_truth(truth: TruthContext) -> str:
    lines = [
        f"theta_star={_fmt_vector(truth.theta_star)}",
        f"theta_star_g={_fmt_vector(truth.theta_star_g)}",
        f"curvature_sq={_fmt_matrix(truth.curvature_sq)}",
        f"score_cov={_fmt_matrix(truth.score_cov)}",
        f"noise_cov={_fmt_matrix(truth.noise_cov)}",
        "score_noise="
        + ("" if truth.score_noise is None else _fmt_vector(truth.score_noise)),
        f"radius={truth.radius!r}",
        f"penalty_diag={_fmt_vector(truth.penalty_diag)}",
        f"n={truth.n}",
        f"target_grad_norm={truth.target_grad_norm!r}",
    ]
    return "\n".join(lines) + "\n"


def parse_record(text: str) -> dict:
    """Invert the flat key=value records written by the serializers."""
    out = {}
    for line in text.strip().split("\n"):
        key, _, raw = line.partition("=")
        if raw == "":
            out[key] = None
        elif ";" in raw:
            out[key] = np.array([[float(v) for v in row.split(",")] for row in raw.split(";")])
        elif "," in raw:
            out[key] = np.array([float(v) for v in raw.split(",")])
        elif key in ("iterations", "backtracks", "n"):
            out[key] = int(raw)
        else:
            out[key] = float(raw)
    return out

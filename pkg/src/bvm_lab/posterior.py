"""Posterior machinery: Laplace law, random-walk Metropolis, and the
Gaussian-approximation metrics.

The sampler is a preconditioned random-walk Metropolis on the prior support.
run_chains advances many replications in lockstep so the per-step numpy cost
is shared; each chain consumes only its own RandomSource streams, so a
batched run is bit-identical to running the chains one at a time.  Streaming
collectors (moments, weighted norms, raw draws) let replication studies run
without holding every draw matrix in memory.

All comparison metrics work on the elliptic family {u: |Q u| <= r} and its
shifted variant; Gaussian reference probabilities come from a caller-supplied
common-random-number block so differences across radii and sample sizes are
positively coupled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .numerics import (
    CholeskyFactor,
    DimensionMismatch,
    RandomSource,
    spd_factor,
    sym_opnorm,
    sym_sqrt,
    trace_solve,
)
from .priors import PriorSpec, penalty_diagonal


class ChainDiverged(RuntimeError):
    pass


class EmptyDenominator(RuntimeError):
    """No chain draw fell inside the reference ball; the radius is mis-sized."""


class OrderingViolated(ValueError):
    """Prior precisions are not ordered coordinate-wise as required."""


@dataclass(frozen=True)
class LaplaceApprox:
    """Gaussian N(center, precision_sq^{-1}) with a reusable factor."""

    center: np.ndarray
    precision_sq: np.ndarray
    factor: CholeskyFactor

    @property
    def dim(self) -> int:
        return self.center.size

    def sample(self, rs: RandomSource, size: int) -> np.ndarray:
        z = rs.generator().standard_normal((size, self.dim))
        return self.center + scipy.linalg.solve_triangular(
            self.factor.lower.T, z.T, lower=False
        ).T

    def log_density(self, theta: np.ndarray) -> float:
        diff = np.asarray(theta, dtype=float) - self.center
        quad = float(diff @ self.precision_sq @ diff)
        norm_const = 0.5 * self.factor.logdet() - 0.5 * self.dim * math.log(2.0 * math.pi)
        return norm_const - 0.5 * quad


def laplace(fit) -> LaplaceApprox:
    """Gaussian approximation centered at the fit with its curvature."""
    return LaplaceApprox(fit.theta, fit.precision_sq, spd_factor(fit.precision_sq))


def batch_objective(model, datasets, penalty: np.ndarray):
    """Vectorized penalized log-likelihood across replications.

    Returns f(Theta) for Theta of shape (R, m), where row r is evaluated
    against datasets[r].  Used by the chain driver; single-chain callers wrap
    their dataset in a one-element list.
    """
    m = penalty.size
    kind = model.kind
    n = model.n
    if kind == "logdensity":
        suff = np.stack([ds.suff[:m] for ds in datasets])
        cols = model._node_basis[:, :m]
        log_w = np.log(model._weights)

        def objective(theta):
            t = cols @ theta.T
            phi = logsumexp(t + log_w[:, None], axis=0)
            return (suff * theta).sum(axis=1) - n * phi - 0.5 * theta**2 @ penalty

    elif kind in ("logistic", "poisson"):
        y = np.stack([ds.responses for ds in datasets], axis=1)
        design = model.design[:, :m]
        if kind == "logistic":
            def objective(theta):
                v = design @ theta.T
                return (y * v).sum(axis=0) - np.logaddexp(0.0, v).sum(axis=0) - 0.5 * theta**2 @ penalty
        else:
            def objective(theta):
                v = design @ theta.T
                return (y * v).sum(axis=0) - np.exp(v).sum(axis=0) - 0.5 * theta**2 @ penalty

    elif kind == "gaussseq":
        suff = np.stack([ds.suff[:m] for ds in datasets])

        def objective(theta):
            return (suff * theta).sum(axis=1) - 0.5 * n * (theta**2).sum(axis=1) - 0.5 * theta**2 @ penalty

    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return objective


class DrawCollector:
    """Stores every kept draw; for single chains and small batches."""

    def __init__(self, n_chains: int, n_kept: int, dim: int):
        self.draws = np.empty((n_chains, n_kept, dim))
        self._at = 0

    def consume(self, chunk: np.ndarray):
        b = chunk.shape[1]
        self.draws[:, self._at : self._at + b, :] = chunk
        self._at += b


class MomentCollector:
    """Streaming mean, second moment, and split-segment sums for R-hat.

    The scale-reduction statistic needs only per-segment first and second
    moments, so the streamed value matches the one computed from raw draws.
    Passing per-chain centers (the fit, say) keeps the accumulators small and
    the covariance free of cancellation; results are center-invariant.
    """

    def __init__(
        self,
        n_chains: int,
        n_kept: int,
        dim: int,
        n_segments: int = 4,
        centers: np.ndarray | None = None,
    ):
        self.n_kept = n_kept
        self.n_segments = n_segments
        self.seg_len = max(1, n_kept // n_segments)
        self.centers = None if centers is None else np.atleast_2d(np.asarray(centers, dtype=float))
        self.sum = np.zeros((n_chains, dim))
        self.outer = np.zeros((n_chains, dim, dim))
        self.seg_sum = np.zeros((n_chains, n_segments, dim))
        self.seg_sumsq = np.zeros((n_chains, n_segments, dim))
        self.count = 0

    def consume(self, chunk: np.ndarray):
        if self.centers is not None:
            chunk = chunk - self.centers[:, None, :]
        b = chunk.shape[1]
        self.sum += chunk.sum(axis=1)
        self.outer += np.einsum("rbi,rbj->rij", chunk, chunk)
        done = 0
        while done < b:
            seg = min((self.count + done) // self.seg_len, self.n_segments - 1)
            if seg == self.n_segments - 1:
                upto = b
            else:
                upto = min(b, (seg + 1) * self.seg_len - self.count)
            part = chunk[:, done:upto, :]
            self.seg_sum[:, seg, :] += part.sum(axis=1)
            self.seg_sumsq[:, seg, :] += (part**2).sum(axis=1)
            done = upto
        self.count += b

    def mean(self) -> np.ndarray:
        m = self.sum / self.count
        if self.centers is not None:
            m = m + self.centers
        return m

    def cov(self) -> np.ndarray:
        m = self.sum / self.count
        c = self.outer / self.count - np.einsum("ri,rj->rij", m, m)
        return 0.5 * (c + np.swapaxes(c, 1, 2))

    def rhat(self) -> np.ndarray:
        # lengths per segment; the last absorbs the remainder
        lens = np.full(self.n_segments, self.seg_len, dtype=float)
        lens[-1] = self.count - self.seg_len * (self.n_segments - 1)
        means = self.seg_sum / lens[None, :, None]
        variances = (self.seg_sumsq - lens[None, :, None] * means**2) / (
            lens[None, :, None] - 1.0
        )
        w = variances.mean(axis=1)
        L = lens.mean()
        b = L * means.var(axis=1, ddof=1)
        var_plus = (L - 1.0) / L * w + b / L
        return np.sqrt(var_plus / w).max(axis=1)


class NormCollector:
    """Streaming |Q(draw - center - shift)| series per chain, float32.

    q_matrix may be one matrix shared by all chains or a stack with one
    matrix per chain (shape (n_chains, q_rows, dim)).
    """

    def __init__(self, q_matrix: np.ndarray, centers: np.ndarray, n_kept: int, shift=None):
        q = np.asarray(q_matrix, dtype=float)
        self.q = np.atleast_2d(q) if q.ndim < 3 else q
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if shift is not None:
            self.centers = self.centers + np.asarray(shift, dtype=float)
        self.norms = np.empty((self.centers.shape[0], n_kept), dtype=np.float32)
        self._at = 0

    def consume(self, chunk: np.ndarray):
        b = chunk.shape[1]
        centered = chunk - self.centers[:, None, :]
        if self.q.ndim == 3:
            w = np.einsum("rqd,rbd->rbq", self.q, centered)
        else:
            w = np.einsum("qd,rbd->rbq", self.q, centered)
        self.norms[:, self._at : self._at + b] = np.sqrt((w**2).sum(axis=2))
        self._at += b


def run_chains(
    objective,
    starts: np.ndarray,
    proposal_rights: np.ndarray,
    sources,
    n_kept: int,
    burn_in: int,
    thin: int = 1,
    block: int = 4096,
    collectors=(),
) -> np.ndarray:
    """Metropolis random walk, all chains advanced in lockstep.

    starts: (R, d); proposal_rights: (R, d, d) right-multipliers so that a
    standard normal row z becomes the proposal step z @ proposal_rights[r];
    sources: one RandomSource per chain, child streams (0, block) for steps
    and (1, block) for acceptance uniforms.  Returns the kept-phase
    acceptance rate per chain; collectors consume kept draws in order.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n_chains, dim = starts.shape
    if len(sources) != n_chains:
        raise DimensionMismatch("one RandomSource per chain required")
    theta = starts.copy()
    cur = objective(theta)
    if not np.all(np.isfinite(cur)):
        raise ChainDiverged("objective not finite at the chain start")
    total = burn_in + n_kept * thin
    accepted = np.zeros(n_chains)
    kept_buffer = None
    kept_in_buffer = 0
    kept_total = 0
    buffer_cap = max(1, min(n_kept, 65536 // max(1, n_chains)) )
    step_idx = 0
    block_idx = 0
    while step_idx < total:
        b = min(block, total - step_idx)
        z = np.empty((n_chains, b, dim))
        u = np.empty((n_chains, b))
        for r, rs in enumerate(sources):
            gen = rs.child(0, block_idx).generator()
            z[r] = gen.standard_normal((b, dim))
            u[r] = rs.child(1, block_idx).generator().random(b)
        log_u = np.log(u)
        steps = np.einsum("rbd,rdk->rbk", z, proposal_rights)
        for t in range(b):
            prop = theta + steps[:, t, :]
            lp = objective(prop)
            if np.any(np.isnan(lp)):
                raise ChainDiverged("objective returned NaN during sampling")
            take = log_u[:, t] < lp - cur
            theta[take] = prop[take]
            cur[take] = lp[take]
            global_t = step_idx + t
            if global_t >= burn_in:
                accepted += take
                if (global_t - burn_in) % thin == 0:
                    if kept_buffer is None:
                        kept_buffer = np.empty((n_chains, buffer_cap, dim))
                    kept_buffer[:, kept_in_buffer, :] = theta
                    kept_in_buffer += 1
                    kept_total += 1
                    if kept_in_buffer == buffer_cap:
                        for c in collectors:
                            c.consume(kept_buffer[:, :kept_in_buffer, :])
                        kept_in_buffer = 0
        step_idx += b
        block_idx += 1
    if kept_in_buffer and kept_buffer is not None:
        for c in collectors:
            c.consume(kept_buffer[:, :kept_in_buffer, :])
    kept_phase = total - burn_in
    return accepted / kept_phase


def proposal_right(precision_sq: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Right-multiplier c L^{-1} giving proposal covariance c^2 precision^{-1}."""
    factor = spd_factor(precision_sq)
    if scale is None:
        scale = 2.38 / math.sqrt(factor.dim)
    eye = np.eye(factor.dim)
    return scale * scipy.linalg.solve_triangular(factor.lower, eye, lower=True)


@dataclass(frozen=True)
class Chain:
    """Kept draws with the run diagnostics the invariants gate on."""

    draws: np.ndarray
    acceptance: float
    burn_in: int
    thinning: int
    split_rhat: float

    @property
    def n_kept(self) -> int:
        return self.draws.shape[0]

    @property
    def healthy(self) -> bool:
        return 0.05 < self.acceptance < 0.8 and self.split_rhat <= 1.05


def split_rhat(draws: np.ndarray, n_segments: int = 4) -> float:
    """Scale-reduction over contiguous segments of one chain, max across dims."""
    n, dim = draws.shape
    seg_len = n // n_segments
    segs = draws[: seg_len * n_segments].reshape(n_segments, seg_len, dim)
    w = segs.var(axis=1, ddof=1).mean(axis=0)
    b = seg_len * segs.mean(axis=1).var(axis=0, ddof=1)
    var_plus = (seg_len - 1.0) / seg_len * w + b / seg_len
    return float(np.sqrt(var_plus / w).max())


def mcmc_sample(
    model,
    data,
    prior: PriorSpec,
    fit,
    rs: RandomSource,
    n_kept: int = 200_000,
    burn_in: int = 50_000,
    thin: int = 1,
    proposal_scale: float | None = None,
) -> Chain:
    """One random-walk Metropolis chain targeting the penalized posterior."""
    penalty = penalty_diagonal(prior, model.dim)
    objective = batch_objective(model, [data], penalty)
    right = proposal_right(fit.precision_sq, proposal_scale)
    coll = DrawCollector(1, n_kept, penalty.size)
    acc = run_chains(
        objective,
        fit.theta[None, :],
        right[None, :, :],
        [rs],
        n_kept,
        burn_in,
        thin,
        collectors=[coll],
    )
    acceptance = float(acc[0])
    if acceptance < 0.02:
        raise ChainDiverged(f"acceptance rate {acceptance:.4f} below 0.02")
    draws = coll.draws[0]
    return Chain(draws, acceptance, burn_in, thin, split_rhat(draws))


def serialize_chain(chain: Chain) -> str:
    lines = [" ".join(repr(float(v)) for v in row) for row in chain.draws]
    return "\n".join(lines) + "\n"


def ess(series: np.ndarray) -> float:
    """Effective sample size by the initial-positive-pairs rule.

    Autocovariances via FFT; pair sums of consecutive lags are accumulated
    while they stay positive.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real / n
    if acov[0] <= 0.0:
        return float(n)
    rho = acov / acov[0]
    iact = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        iact += 2.0 * pair
    iact = max(iact, 1.0)
    return float(n / iact)


@dataclass(frozen=True)
class RhoReport:
    value: float
    bound: float
    inside: int
    outside: int
    p_tilde: float


def rho_hat(
    chain: Chain,
    fit,
    h_sq: np.ndarray,
    r0: float,
    x: float,
    composite: float = 0.0,
) -> RhoReport:
    """Posterior mass ratio outside/inside the calibration ball of radius r0.

    The reference bound is e^{-(p+x)/2} / (1 - e^{-(p+x)/2}) inflated by
    1/(1 - composite), with p the effective dimension at the fit.
    """
    h = sym_sqrt(np.asarray(h_sq, dtype=float))
    norms = np.linalg.norm((chain.draws - fit.theta) @ h.T, axis=1)
    outside = int((norms > r0).sum())
    inside = norms.size - outside
    if inside == 0:
        raise EmptyDenominator("no draw inside the radius; r0 is too small")
    p_tilde = trace_solve(fit.precision_sq, h_sq)
    q = math.exp(-(p_tilde + x) / 2.0)
    bound = q / (1.0 - q) / (1.0 - composite)
    return RhoReport(outside / inside, bound, inside, outside, p_tilde)


def gaussian_block(rs: RandomSource, n_draws: int, dim: int) -> np.ndarray:
    """Common-random-number standard normal block shared across metrics."""
    return rs.generator().standard_normal((n_draws, dim))


def _reference_norms(
    lap: LaplaceApprox, q: np.ndarray, block: np.ndarray, shift=None
) -> np.ndarray:
    # block rows are standard normal; map through D^{-1} then Q
    draws = scipy.linalg.solve_triangular(lap.factor.lower.T, block.T, lower=False).T
    if shift is not None:
        draws = draws - shift
    return np.linalg.norm(draws @ q.T, axis=1)


def _sup_cdf_gap(a: np.ndarray, b: np.ndarray, grid: np.ndarray) -> float:
    fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    return float(np.abs(fa - fb).max())


def _shared_grid(a: np.ndarray, b: np.ndarray, n_grid: int) -> np.ndarray:
    qs = np.linspace(0.0005, 0.9995, n_grid)
    return np.union1d(np.quantile(a, qs), np.quantile(b, qs))


@dataclass(frozen=True)
class BvmReport:
    """Sup distance between posterior and Gaussian elliptic probabilities."""

    mode: str
    error: float
    chain_halfwidth: float
    gauss_halfwidth: float
    ess: float
    grid: np.ndarray

    def __post_init__(self):
        if not (0.0 <= self.error <= 1.0):
            raise ValueError("a probability distance must lie in [0, 1]")

    @property
    def combined_halfwidth(self) -> float:
        return self.chain_halfwidth + self.gauss_halfwidth


def default_shift(lap: LaplaceApprox) -> np.ndarray:
    """Unit-calibrated asymmetry probe: a with |D a| = 1 along the diagonal."""
    v = np.ones(lap.dim) / math.sqrt(lap.dim)
    return np.linalg.solve(sym_sqrt(lap.precision_sq), v)


def bvm_error_from_norms(
    chain_norms: np.ndarray,
    ref_norms: np.ndarray,
    mode: str = "symmetric",
    n_grid: int = 64,
    grid: np.ndarray | None = None,
) -> BvmReport:
    """Sup CDF distance between two norm samples over a shared radius grid.

    The chain side gets an autocorrelation-adjusted half-width; the reference
    side is treated as independent draws.
    """
    if n_grid < 64 and grid is None:
        raise ValueError("radius grid must have at least 64 points")
    chain_norms = np.asarray(chain_norms, dtype=float)
    ref_norms = np.asarray(ref_norms, dtype=float)
    if grid is None:
        grid = _shared_grid(chain_norms, ref_norms, n_grid)
    error = _sup_cdf_gap(chain_norms, ref_norms, grid)
    n_eff = ess(chain_norms)
    return BvmReport(
        mode,
        error,
        0.98 / math.sqrt(n_eff),
        0.98 / math.sqrt(ref_norms.size),
        n_eff,
        grid,
    )


def bvm_errors(
    chain: Chain,
    lap: LaplaceApprox,
    q_matrix: np.ndarray,
    block: np.ndarray,
    mode: str = "symmetric",
    shift: np.ndarray | None = None,
    n_grid: int = 64,
    grid: np.ndarray | None = None,
) -> BvmReport:
    """Max over an elliptic radius grid of |posterior - Gaussian| probability.

    mode "symmetric" compares |Q(draw - center)|; mode "shifted" offsets both
    laws by the same vector (default unit-calibrated diagonal shift), probing
    non-centered sets.  The Gaussian side reuses the caller's common block.
    """
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    if mode == "symmetric":
        shift = None
    elif mode == "shifted":
        if shift is None:
            shift = default_shift(lap)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    center = lap.center if shift is None else lap.center + shift
    chain_norms = np.linalg.norm((chain.draws - center) @ q.T, axis=1)
    ref_norms = _reference_norms(lap, q, block, shift)
    return bvm_error_from_norms(chain_norms, ref_norms, mode, n_grid, grid)


@dataclass(frozen=True)
class MeanGapReport:
    gap: float
    gap_halfwidth: float
    variance_gap: float
    ess_min: float


def posterior_mean_gap(chain: Chain, fit, q_matrix: np.ndarray) -> MeanGapReport:
    """|Q(chain mean - fit)| and the whitened covariance distortion.

    variance_gap is |I - D Cov D| in operator norm, the chain covariance
    whitened by the fitted curvature root.
    """
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    mean = chain.draws.mean(axis=0)
    gap = float(np.linalg.norm(q @ (mean - fit.theta)))
    cov = np.cov(chain.draws.T)
    cov = np.atleast_2d(cov)
    d = sym_sqrt(fit.precision_sq)
    variance_gap = sym_opnorm(np.eye(fit.theta.size) - d @ cov @ d)
    ess_min = min(ess(chain.draws[:, j]) for j in range(chain.draws.shape[1]))
    q_cov_q = q @ cov @ q.T
    gap_halfwidth = 4.0 * math.sqrt(max(np.trace(q_cov_q), 0.0) / ess_min)
    return MeanGapReport(gap, gap_halfwidth, variance_gap, ess_min)


def projector_dimension(lap: LaplaceApprox, projector: np.ndarray) -> float:
    """tr(P D^2 P D^{-2} P); equals rank(P) when P commutes with D."""
    p = np.asarray(projector, dtype=float)
    inv = np.linalg.inv(lap.precision_sq)
    return float(np.trace(p @ lap.precision_sq @ p @ inv @ p))


def bvm_mean_centered(
    chain: Chain,
    lap: LaplaceApprox,
    q_matrix: np.ndarray,
    projector: np.ndarray,
    block: np.ndarray,
    n_grid: int = 64,
) -> tuple[BvmReport, float]:
    """Symmetric-set error with the posterior recentered at its own mean.

    Q acts through the projector; the companion value is the projected
    effective dimension the error bound scales with.
    """
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float)) @ np.asarray(projector, dtype=float)
    mean = chain.draws.mean(axis=0)
    chain_norms = np.linalg.norm((chain.draws - mean) @ q.T, axis=1)
    ref_norms = _reference_norms(lap, q, block)
    grid = _shared_grid(chain_norms, ref_norms, n_grid)
    error = _sup_cdf_gap(chain_norms, ref_norms, grid)
    n_eff = ess(chain_norms)
    report = BvmReport(
        "mean-centered",
        error,
        0.98 / math.sqrt(n_eff),
        0.98 / math.sqrt(block.shape[0]),
        n_eff,
        grid,
    )
    return report, projector_dimension(lap, projector)


@dataclass(frozen=True)
class CredibleRadius:
    value: float
    exact: float | None
    alpha: float


def _exact_two_weight_radius(weights: np.ndarray, alpha: float) -> float:
    from scipy.integrate import quad
    from scipy.optimize import brentq
    from scipy.stats import chi2, norm

    w = np.sort(np.abs(weights))[::-1]
    if w.size == 1 or w[1] < 1e-14:
        return float(w[0] * norm.ppf(1.0 - alpha / 2.0))
    if abs(w[0] - w[1]) < 1e-12 * w[0]:
        return float(w[0] * math.sqrt(chi2.ppf(1.0 - alpha, df=2)))

    def coverage(r):
        lim = r / w[0]

        def integrand(t):
            rem = (r * r - w[0] ** 2 * t * t) / w[1] ** 2
            return norm.pdf(t) * chi2.cdf(rem, df=1)

        return quad(integrand, -lim, lim, epsabs=1e-12, epsrel=1e-10)[0]

    hi = float(w[0] * norm.ppf(1.0 - alpha / 4.0) + w[1] * 3.0)
    return float(brentq(lambda r: coverage(r) - (1.0 - alpha), 1e-9, hi, xtol=1e-10))


def credible_radius(
    lap: LaplaceApprox,
    q_matrix: np.ndarray,
    alpha: float,
    rs: RandomSource,
    n_mc: int = 100_000,
) -> CredibleRadius:
    """Radius whose Gaussian ellipsoid credibility is 1 - alpha.

    Monte Carlo quantile of |Q D^{-1} gamma|; when Q has at most two rows the
    exact value of the weighted chi-square quantile is attached (the norm law
    depends only on the singular values of Q D^{-1}).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    block = rs.generator().standard_normal((n_mc, lap.dim))
    norms = _reference_norms(lap, q, block)
    value = float(np.quantile(norms, 1.0 - alpha))
    exact = None
    if q.shape[0] <= 2:
        a = q @ np.linalg.inv(sym_sqrt(lap.precision_sq))
        weights = np.linalg.svd(a, compute_uv=False)
        exact = _exact_two_weight_radius(weights, alpha)
    return CredibleRadius(value, exact, alpha)


def small_bias_value(truth, q_matrix: np.ndarray) -> float:
    """Squared weighted penalty pull over the trace of the sampling variance."""
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    support = truth.support
    g2_theta = truth.penalty_diag * truth.theta_star[:support]
    pull = q @ np.linalg.solve(truth.curvature_sq, g2_theta)
    half = q @ np.linalg.solve(truth.curvature_sq, sym_sqrt(truth.score_cov))
    denom = float((half * half).sum())
    return float(pull @ pull) / denom


@dataclass(frozen=True)
class ContractionReport:
    exceedance: float
    threshold: float
    trace_term: float
    opnorm_term: float
    bias_audit: float


def contraction_threshold(
    truth, q_matrix: np.ndarray, c1: float = 4.0, c2: float = 4.0
) -> tuple[float, float, float]:
    """(threshold, trace term, operator-norm term) of the contraction radius.

    threshold = c1 tr(Q D^{-2} Q') + c2 log n |Q D^{-2} Q'| with the
    population curvature.
    """
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    qdq = q @ np.linalg.solve(truth.curvature_sq, q.T)
    trace_term = float(np.trace(qdq))
    opnorm_term = sym_opnorm(0.5 * (qdq + qdq.T))
    return c1 * trace_term + c2 * math.log(truth.n) * opnorm_term, trace_term, opnorm_term


def contraction_bias_audit(truth, q_matrix: np.ndarray) -> float:
    """Bias-variance trade-off ratio that licenses the contraction bound."""
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    _, trace_term, _ = contraction_threshold(truth, q_matrix, 1.0, 0.0)
    g2_theta = truth.penalty_diag * truth.theta_star[: truth.support]
    pull = q @ np.linalg.solve(truth.curvature_sq, g2_theta)
    return float(pull @ pull) / trace_term


def contraction_check(
    chain: Chain,
    truth,
    q_matrix: np.ndarray,
    c1: float = 4.0,
    c2: float = 4.0,
) -> ContractionReport:
    """Posterior mass beyond the effective-dimension contraction threshold."""
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    threshold, trace_term, opnorm_term = contraction_threshold(truth, q, c1, c2)
    sq = ((chain.draws - truth.theta_star[: truth.support]) @ q.T) ** 2
    exceedance = float((sq.sum(axis=1) >= threshold).mean())
    bias_audit = contraction_bias_audit(truth, q)
    return ContractionReport(exceedance, threshold, trace_term, opnorm_term, bias_audit)


def coverage_trial(fit, truth, q_matrix: np.ndarray, r_alpha: float) -> bool:
    """Whether the elliptic credible set around the fit captures the truth."""
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    diff = fit.theta - truth.theta_star[: truth.support]
    return bool(np.linalg.norm(q @ diff) <= r_alpha)


@dataclass(frozen=True)
class PriorComparisonReport:
    distance: float
    variance_term: float
    bias_term: float
    frobenius: float


def prior_comparison(
    fit_small,
    fit_large,
    chain_small: Chain,
    chain_large: Chain,
    q_matrix: np.ndarray,
    n_grid: int = 64,
) -> PriorComparisonReport:
    """Swap test for two ordered priors, both centered at the simpler fit.

    fit_small must carry the coordinate-wise smaller penalty.  distance is
    the sup over a shared radius grid of the two posterior probabilities;
    variance_term and bias_term are the curvature-difference trace and the
    squared center shift, each normalized by the Frobenius size of the
    weighted posterior covariance.
    """
    small = fit_small.penalty_diag
    large = fit_large.penalty_diag
    if small.size != large.size or np.any(small > large + 1e-12):
        raise OrderingViolated("penalties are not ordered small <= large")
    q = np.atleast_2d(np.asarray(q_matrix, dtype=float))
    center = fit_large.theta
    norms_small = np.linalg.norm((chain_small.draws - center) @ q.T, axis=1)
    norms_large = np.linalg.norm((chain_large.draws - center) @ q.T, axis=1)
    grid = _shared_grid(norms_small, norms_large, n_grid)
    distance = _sup_cdf_gap(norms_small, norms_large, grid)
    cov_small = q @ np.linalg.solve(fit_small.precision_sq, q.T)
    cov_large = q @ np.linalg.solve(fit_large.precision_sq, q.T)
    frob = float(np.linalg.norm(cov_small, "fro"))
    variance_term = float(np.trace(cov_small - cov_large)) / frob
    bias_term = float(np.sum((q @ (fit_small.theta - fit_large.theta)) ** 2)) / frob
    return PriorComparisonReport(distance, variance_term, bias_term, frob)

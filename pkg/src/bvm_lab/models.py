"""Concrete models: cosine-series log-density, generalized linear regression,
and a Gaussian sequence surrogate.

All three expose the same surface to the estimation layer:
  log_lik / grad_log_lik      likelihood and score at a parameter vector
  fisher                      expected negative Hessian block
  taylor_coefficient          higher directional derivatives of the expected
                              log-likelihood (order 3 and 4)
  expected_log_lik            population objective for a given truth
  expectation_dataset         dataset whose responses equal their expectations
  sample_data                 synthetic draws, deterministic per RandomSource

Parameter vectors may be shorter than the ambient dimension; they are read as
the leading coordinates with zeros beyond (prior support restriction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

from .numerics import (
    DimensionMismatch,
    NonFiniteIntegrand,
    RandomSource,
    quadrature_nodes,
)

INVERSE_CDF_GRID = 65536


class CosineBasis:
    """psi_j(x) = sqrt(2) cos(pi j x) on [0,1], j = 1..size.

    Orthonormal in L2([0,1]) and uniformly bounded by sqrt(2).
    """

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("basis size must be >= 1")
        self.size = size

    def evaluate(self, x: np.ndarray, out_dim: int | None = None) -> np.ndarray:
        out_dim = self.size if out_dim is None else out_dim
        if out_dim > self.size:
            raise DimensionMismatch("out_dim exceeds the basis size")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        j = np.arange(1, out_dim + 1)
        return math.sqrt(2.0) * np.cos(np.pi * np.outer(x, j))


@dataclass(frozen=True)
class Dataset:
    """Observations plus the sufficient statistic where one exists.

    kind is one of logdensity / logistic / poisson / gaussseq.  points holds
    the X draws for the log-density model; responses holds Y (GLM: shape (n,),
    sequence model: shape (n, dim)).  suff is sum of basis rows (log-density)
    or sum of observation rows (sequence model); None for GLM.  truth is kept
    for synthetic data only and never serialized.
    """

    kind: str
    n: int
    dim: int
    seed: int
    points: np.ndarray | None
    responses: np.ndarray | None
    suff: np.ndarray | None
    truth: np.ndarray | None


def serialize_dataset(ds: Dataset) -> str:
    """Flat text form: header `model,n,p,seed`, one observation per line.

    Floats are written with repr, which round-trips bit-exactly.  The truth
    vector is intentionally not part of the format.
    """
    lines = [f"{ds.kind},{ds.n},{ds.dim},{ds.seed}"]
    if ds.kind == "logdensity":
        if ds.points is None:
            raise ValueError("log-density dataset without observation points")
        lines.extend(repr(float(x)) for x in ds.points)
    elif ds.kind in ("logistic", "poisson"):
        lines.extend(repr(float(y)) for y in ds.responses)
    elif ds.kind == "gaussseq":
        lines.extend(",".join(repr(float(v)) for v in row) for row in ds.responses)
    else:
        raise ValueError(f"unknown dataset kind {ds.kind!r}")
    return "\n".join(lines) + "\n"


def deserialize_dataset(text: str) -> Dataset:
    rows = text.strip().split("\n")
    kind, n_s, p_s, seed_s = rows[0].split(",")
    n, dim, seed = int(n_s), int(p_s), int(seed_s)
    body = rows[1:]
    if len(body) != n:
        raise ValueError(f"expected {n} observations, found {len(body)}")
    if kind == "logdensity":
        points = np.array([float(v) for v in body])
        suff = CosineBasis(dim).evaluate(points).sum(axis=0)
        return Dataset(kind, n, dim, seed, points, None, suff, None)
    if kind in ("logistic", "poisson"):
        responses = np.array([float(v) for v in body])
        return Dataset(kind, n, dim, seed, None, responses, None, None)
    if kind == "gaussseq":
        responses = np.array([[float(v) for v in row.split(",")] for row in body])
        if responses.shape[1] != dim:
            raise DimensionMismatch("row width does not match header dimension")
        return Dataset(kind, n, dim, seed, None, responses, responses.sum(axis=0), None)
    raise ValueError(f"unknown dataset kind {kind!r}")


def pad_to(theta: np.ndarray, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.size > dim:
        raise DimensionMismatch("parameter longer than the ambient dimension")
    if theta.size == dim:
        return theta
    out = np.zeros(dim)
    out[: theta.size] = theta
    return out


def sobolev_truth(dim: int, smoothness: float) -> np.ndarray:
    """Deterministic truth with alternating signs and polynomial decay.

    Coefficients A * j^{-(s + 1/2)} * (-1)^{j+1} with A set so the weighted
    energy sum_j j^{2s} theta_j^2 equals 0.9, strictly inside the unit
    smoothness ball.
    """
    j = np.arange(1, dim + 1, dtype=float)
    amp = math.sqrt(0.9 / np.sum(1.0 / j))
    return amp * j ** (-(smoothness + 0.5)) * (-1.0) ** (j + 1.0)


def glm_phi_derivs(kind: str, v, k: int):
    """Log-partition derivative of the named order, vectorized over v.

    Logistic uses logaddexp and expit, stable for |v| in the hundreds.
    Poisson is exp(v) at every order.
    """
    if k not in (0, 1, 2, 3, 4):
        raise ValueError("order must be in 0..4")
    v = np.asarray(v, dtype=float)
    if kind == "poisson":
        return np.exp(v)
    if kind != "logistic":
        raise ValueError(f"unknown GLM kind {kind!r}")
    if k == 0:
        return np.logaddexp(0.0, v)
    s = expit(v)
    if k == 1:
        return s
    w = s * (1.0 - s)
    if k == 2:
        return w
    if k == 3:
        return w * (1.0 - 2.0 * s)
    return w * (1.0 - 6.0 * s + 6.0 * s * s)


@dataclass(frozen=True)
class AuditReport:
    """Empirical regularity constants measured over probe points/directions.

    curvature_lo / curvature_hi bound the relevant second-derivative ratio
    (Hessian spectrum for log-density, variance-function ratio for GLM);
    moment_ratio is the directional fourth-to-second moment constant;
    identifiability is the inverse root of the smallest Fisher-per-sample
    eigenvalue ratio.
    """

    curvature_lo: float
    curvature_hi: float
    moment_ratio: float
    identifiability: float
    ok: bool
    details: dict


DEFAULT_AUDIT_THRESHOLDS = {
    "curvature_lo": 10.0,
    "curvature_hi": 10.0,
    "moment_ratio": 10.0,
    "identifiability": 10.0,
}


def _audit_verdict(report_values: dict, thresholds: dict | None) -> bool:
    gates = dict(DEFAULT_AUDIT_THRESHOLDS)
    if thresholds:
        gates.update(thresholds)
    return all(
        report_values[name] <= gates[name] and np.isfinite(report_values[name])
        for name in gates
    )


class LogDensityModel:
    """Density exp{<Psi(x), theta> - phi(theta)} on [0,1], cosine dictionary.

    n is the sample size of the experiment the model is bound to; it scales
    the likelihood, the Fisher operator, and the Taylor coefficients.
    """

    kind = "logdensity"

    def __init__(self, dim: int, n: int, n_nodes: int = 2048):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.basis = CosineBasis(dim)
        self.dim = dim
        self.n = n
        self.n_nodes = n_nodes
        nodes, weights = quadrature_nodes(n_nodes)
        self._nodes = nodes
        self._weights = weights
        self._node_basis = self.basis.evaluate(nodes)

    def tilt(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Log-partition value and node probabilities of the tilted law."""
        theta = np.asarray(theta, dtype=float)
        t = self._node_basis[:, : theta.size] @ theta
        peak = float(t.max())
        scaled = self._weights * np.exp(t - peak)
        total = float(scaled.sum())
        if not (np.isfinite(total) and total > 0.0):
            raise NonFiniteIntegrand("tilted density integral is not finite")
        return peak + math.log(total), scaled / total

    def phi_and_derivatives(
        self, theta: np.ndarray, out_dim: int | None = None
    ) -> tuple[float, np.ndarray, np.ndarray]:
        """Log-partition, its gradient, and Hessian (tilted covariance).

        out_dim may exceed len(theta): the tilt is defined by the leading
        coordinates while moments are taken of the first out_dim features.
        """
        theta = np.asarray(theta, dtype=float)
        out_dim = theta.size if out_dim is None else out_dim
        phi, pi = self.tilt(theta)
        cols = self._node_basis[:, :out_dim]
        grad = pi @ cols
        hess = (cols * pi[:, None]).T @ cols - np.outer(grad, grad)
        return phi, grad, 0.5 * (hess + hess.T)

    def _check_data(self, data: Dataset):
        if data.kind != self.kind or data.dim != self.dim or data.n != self.n:
            raise DimensionMismatch("dataset does not match this model")

    def log_lik(self, data: Dataset, theta: np.ndarray) -> float:
        self._check_data(data)
        theta = np.asarray(theta, dtype=float)
        phi, _ = self.tilt(theta)
        return float(data.suff[: theta.size] @ theta - self.n * phi)

    def grad_log_lik(self, data: Dataset, theta: np.ndarray) -> np.ndarray:
        self._check_data(data)
        theta = np.asarray(theta, dtype=float)
        _, grad, _ = self.phi_and_derivatives(theta)
        return data.suff[: theta.size] - self.n * grad

    def fisher(self, theta: np.ndarray, out_dim: int | None = None) -> np.ndarray:
        _, _, hess = self.phi_and_derivatives(theta, out_dim=out_dim)
        return self.n * hess

    def expected_suff(self, theta_star: np.ndarray) -> np.ndarray:
        _, grad, _ = self.phi_and_derivatives(
            np.asarray(theta_star, dtype=float), out_dim=self.dim
        )
        return self.n * grad

    def expected_log_lik(self, theta: np.ndarray, theta_star: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        mean_suff = self.expected_suff(theta_star)
        phi, _ = self.tilt(theta)
        return float(mean_suff[: theta.size] @ theta - self.n * phi)

    def expectation_dataset(self, theta_star: np.ndarray) -> Dataset:
        suff = self.expected_suff(theta_star)
        return Dataset(
            self.kind, self.n, self.dim, -1, None, None, suff,
            pad_to(theta_star, self.dim),
        )

    def sample_data(self, theta_star: np.ndarray, rs: RandomSource) -> Dataset:
        """Inverse-CDF draws on a dense uniform grid with linear interpolation."""
        theta_star = np.asarray(theta_star, dtype=float)
        grid = np.linspace(0.0, 1.0, INVERSE_CDF_GRID)
        logd = self.basis.evaluate(grid, out_dim=theta_star.size) @ theta_star
        dens = np.exp(logd - logd.max())
        if not np.all(np.isfinite(dens)):
            raise NonFiniteIntegrand("density overflow on the sampling grid")
        cdf = np.concatenate(
            ([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid)))
        )
        cdf /= cdf[-1]
        u = rs.generator().random(self.n)
        points = np.interp(u, cdf, grid)
        suff = self.basis.evaluate(points).sum(axis=0)
        return Dataset(
            self.kind, self.n, self.dim, rs.seed, points, None, suff,
            pad_to(theta_star, self.dim),
        )

    def taylor_coefficient(self, theta: np.ndarray, u: np.ndarray, k: int) -> float:
        """Directional Taylor coefficient of the expected log-likelihood.

        Orders 3 and 4 are minus n/k! times the matching cumulant of the
        directional feature under the tilted law (derivatives of the
        log-partition along a line are cumulants, so this is plain calculus).
        """
        if k not in (3, 4):
            raise ValueError("only orders 3 and 4 are defined")
        theta = np.asarray(theta, dtype=float)
        u = np.asarray(u, dtype=float)
        if theta.size != u.size:
            raise DimensionMismatch("theta and u must share a length")
        _, pi = self.tilt(theta)
        c = self._node_basis[:, : u.size] @ u
        mean = float(pi @ c)
        d = c - mean
        if k == 3:
            kappa = float(pi @ d**3)
        else:
            var = float(pi @ d**2)
            kappa = float(pi @ d**4) - 3.0 * var * var
        return -self.n * kappa / math.factorial(k)

    def audit_conditions(
        self, theta_probes, u_probes, thresholds: dict | None = None
    ) -> AuditReport:
        """Measure curvature, moment, and identifiability constants on probes."""
        curv_ratios = []
        moment_ratios = []
        fisher_ratios = []
        hessians_pd = True
        for theta in theta_probes:
            theta = np.asarray(theta, dtype=float)
            _, pi = self.tilt(theta)
            _, _, hess = self.phi_and_derivatives(theta, out_dim=self.dim)
            try:
                scipy.linalg.cholesky(hess, lower=True, check_finite=False)
            except scipy.linalg.LinAlgError:
                hessians_pd = False
            for u in u_probes:
                u = np.asarray(u, dtype=float)
                nrm2 = float(u @ u)
                curv_ratios.append(float(u @ hess[: u.size, : u.size] @ u) / nrm2)
                fisher_ratios.append(curv_ratios[-1])  # Fisher is n * Hessian here
                c = self._node_basis[:, : u.size] @ u
                d = c - float(pi @ c)
                m2 = float(pi @ d**2)
                m3 = float(pi @ np.abs(d) ** 3)
                m4 = float(pi @ d**4)
                moment_ratios.append(max(m3 ** (2.0 / 3.0), math.sqrt(m4)) / m2)
        values = {
            "curvature_lo": 1.0 / math.sqrt(min(curv_ratios)),
            "curvature_hi": math.sqrt(max(curv_ratios)),
            "moment_ratio": math.sqrt(max(moment_ratios)),
            "identifiability": 1.0 / math.sqrt(min(fisher_ratios)),
        }
        ok = _audit_verdict(values, thresholds) and hessians_pd
        return AuditReport(
            values["curvature_lo"], values["curvature_hi"], values["moment_ratio"],
            values["identifiability"], ok,
            {"hessians_pd": hessians_pd, "n_theta": len(list(theta_probes))},
        )


class GlmModel:
    """Exponential-family regression over a fixed design, canonical link."""

    def __init__(self, kind: str, design: np.ndarray):
        if kind not in ("logistic", "poisson"):
            raise ValueError(f"unknown GLM kind {kind!r}")
        self.kind = kind
        self.design = np.asarray(design, dtype=float)
        if self.design.ndim != 2:
            raise DimensionMismatch("design must be a 2-d array")
        self.n, self.dim = self.design.shape

    @classmethod
    def equispaced(cls, kind: str, dim: int, n: int) -> "GlmModel":
        """Cosine features at midpoint-equispaced design points.

        The midpoint offset makes the raw Gram matrix exactly n times the
        identity for dim < n (discrete orthogonality of the cosine family).
        """
        x = (np.arange(1, n + 1) - 0.5) / n
        return cls(kind, CosineBasis(dim).evaluate(x))

    def linear_predictor(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.design[:, : theta.size] @ theta

    def _check_data(self, data: Dataset):
        if data.kind != self.kind or data.dim != self.dim or data.n != self.n:
            raise DimensionMismatch("dataset does not match this model")

    def log_lik(self, data: Dataset, theta: np.ndarray) -> float:
        self._check_data(data)
        v = self.linear_predictor(theta)
        return float(data.responses @ v - glm_phi_derivs(self.kind, v, 0).sum())

    def grad_log_lik(self, data: Dataset, theta: np.ndarray) -> np.ndarray:
        self._check_data(data)
        theta = np.asarray(theta, dtype=float)
        v = self.linear_predictor(theta)
        resid = data.responses - glm_phi_derivs(self.kind, v, 1)
        return self.design[:, : theta.size].T @ resid

    def fisher(self, theta: np.ndarray, out_dim: int | None = None) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out_dim = theta.size if out_dim is None else out_dim
        v = self.linear_predictor(theta)
        w = glm_phi_derivs(self.kind, v, 2)
        cols = self.design[:, :out_dim]
        f = (cols * w[:, None]).T @ cols
        return 0.5 * (f + f.T)

    def expected_responses(self, theta_star: np.ndarray) -> np.ndarray:
        return glm_phi_derivs(self.kind, self.linear_predictor(theta_star), 1)

    def expected_log_lik(self, theta: np.ndarray, theta_star: np.ndarray) -> float:
        v = self.linear_predictor(theta)
        mean_y = self.expected_responses(theta_star)
        return float(mean_y @ v - glm_phi_derivs(self.kind, v, 0).sum())

    def expectation_dataset(self, theta_star: np.ndarray) -> Dataset:
        return Dataset(
            self.kind, self.n, self.dim, -1, None,
            self.expected_responses(theta_star), None, pad_to(theta_star, self.dim),
        )

    def sample_data(self, theta_star: np.ndarray, rs: RandomSource) -> Dataset:
        v = self.linear_predictor(theta_star)
        rng = rs.generator()
        if self.kind == "logistic":
            y = (rng.random(self.n) < expit(v)).astype(float)
        else:
            y = rng.poisson(np.exp(v)).astype(float)
        return Dataset(
            self.kind, self.n, self.dim, rs.seed, None, y, None,
            pad_to(theta_star, self.dim),
        )

    def taylor_coefficient(self, theta: np.ndarray, u: np.ndarray, k: int) -> float:
        """Minus 1/k! times the design sum of phi^(k) weighted direction powers."""
        if k not in (3, 4):
            raise ValueError("only orders 3 and 4 are defined")
        theta = np.asarray(theta, dtype=float)
        u = np.asarray(u, dtype=float)
        if theta.size != u.size:
            raise DimensionMismatch("theta and u must share a length")
        v = self.linear_predictor(theta)
        c = self.design[:, : u.size] @ u
        return -float(glm_phi_derivs(self.kind, v, k) @ c**k) / math.factorial(k)

    def audit_conditions(
        self, theta_probes, u_probes, thresholds: dict | None = None
    ) -> AuditReport:
        """Variance-function ratio, design moment ratio, Fisher floor."""
        v_all = np.concatenate(
            [self.linear_predictor(np.asarray(t, dtype=float)) for t in theta_probes]
        )
        span = float(np.abs(v_all).max())
        grid = np.linspace(-span, span, 201) if span > 0 else np.zeros(1)
        w = glm_phi_derivs(self.kind, grid, 2)
        w0 = float(glm_phi_derivs(self.kind, 0.0, 2))
        curvature_lo = float(w.min()) / w0
        curvature_hi = float(w.max()) / w0
        moment_ratios = []
        fisher_ratios = []
        theta_first = np.asarray(next(iter(theta_probes)), dtype=float)
        fstar = self.fisher(theta_first, out_dim=self.dim)
        for u in u_probes:
            u = np.asarray(u, dtype=float)
            c = self.design[:, : u.size] @ u
            s2 = float(c @ c)
            moment_ratios.append(self.n * float((c**4).sum()) / (s2 * s2))
            uf = pad_to(u, self.dim)
            fisher_ratios.append(float(uf @ fstar @ uf) / (self.n * float(u @ u)))
        values = {
            "curvature_lo": 1.0 / curvature_lo if curvature_lo > 0 else math.inf,
            "curvature_hi": curvature_hi,
            "moment_ratio": max(moment_ratios) ** 0.25,
            "identifiability": 1.0 / math.sqrt(min(fisher_ratios)),
        }
        ok = _audit_verdict(values, thresholds)
        return AuditReport(
            curvature_lo, curvature_hi, values["moment_ratio"],
            values["identifiability"], ok,
            {"predictor_span": span, "variance_floor_inverse": values["curvature_lo"]},
        )


class GaussSeqModel:
    """n i.i.d. Gaussian vector observations with identity covariance.

    The log-likelihood is exactly quadratic, which makes every expansion in
    the estimation layer exact and every higher Taylor coefficient zero.
    Used as the closed-form crosscheck for the whole pipeline.
    """

    kind = "gaussseq"

    def __init__(self, dim: int, n: int):
        if dim < 1 or n < 1:
            raise ValueError("dim and n must be >= 1")
        self.dim = dim
        self.n = n

    def _check_data(self, data: Dataset):
        if data.kind != self.kind or data.dim != self.dim or data.n != self.n:
            raise DimensionMismatch("dataset does not match this model")

    def log_lik(self, data: Dataset, theta: np.ndarray) -> float:
        self._check_data(data)
        theta = np.asarray(theta, dtype=float)
        return float(data.suff[: theta.size] @ theta - 0.5 * self.n * theta @ theta)

    def grad_log_lik(self, data: Dataset, theta: np.ndarray) -> np.ndarray:
        self._check_data(data)
        theta = np.asarray(theta, dtype=float)
        return data.suff[: theta.size] - self.n * theta

    def fisher(self, theta: np.ndarray, out_dim: int | None = None) -> np.ndarray:
        out_dim = np.asarray(theta).size if out_dim is None else out_dim
        return self.n * np.eye(out_dim)

    def expected_suff(self, theta_star: np.ndarray) -> np.ndarray:
        return self.n * pad_to(theta_star, self.dim)

    def expected_log_lik(self, theta: np.ndarray, theta_star: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        mean_suff = self.expected_suff(theta_star)
        return float(mean_suff[: theta.size] @ theta - 0.5 * self.n * theta @ theta)

    def expectation_dataset(self, theta_star: np.ndarray) -> Dataset:
        full = pad_to(theta_star, self.dim)
        rows = np.tile(full, (self.n, 1))
        return Dataset(self.kind, self.n, self.dim, -1, None, rows, self.n * full, full)

    def sample_data(self, theta_star: np.ndarray, rs: RandomSource) -> Dataset:
        full = pad_to(theta_star, self.dim)
        rows = full + rs.generator().standard_normal((self.n, self.dim))
        return Dataset(
            self.kind, self.n, self.dim, rs.seed, None, rows, rows.sum(axis=0), full
        )

    def taylor_coefficient(self, theta: np.ndarray, u: np.ndarray, k: int) -> float:
        if k not in (3, 4):
            raise ValueError("only orders 3 and 4 are defined")
        return 0.0

    def audit_conditions(
        self, theta_probes, u_probes, thresholds: dict | None = None
    ) -> AuditReport:
        return AuditReport(1.0, 1.0, math.sqrt(3.0), 1.0, True, {"quadratic": True})


def sample_data(model, theta_star: np.ndarray, n: int, rs: RandomSource) -> Dataset:
    """Draw a synthetic dataset; n must agree with the model's bound size."""
    if n != model.n:
        raise DimensionMismatch(
            f"model is bound to n={model.n}; requested n={n}"
        )
    return model.sample_data(theta_star, rs)


def verify_suff(ds: Dataset) -> float:
    """Max abs gap between the stored sufficient statistic and a recomputation."""
    if ds.kind == "logdensity":
        fresh = CosineBasis(ds.dim).evaluate(ds.points).sum(axis=0)
    elif ds.kind == "gaussseq":
        fresh = ds.responses.sum(axis=0)
    else:
        return 0.0
    return float(np.abs(fresh - ds.suff).max())

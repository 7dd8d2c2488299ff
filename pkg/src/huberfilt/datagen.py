"""Synthetic Huber-contaminated instances and analytic conditional moments.

Mean instances follow P = (1-eps) N(mu, I) + eps B with a configurable
outlier law B; regression instances follow y = beta^T x + N(0, sigma^2) on
inliers.  Each sample is independently contaminated with probability eps
(binomial count, not a fixed fraction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from ._rng import make_rng
from .data import Dataset

MEAN_KINDS = ("none", "point_mass", "cluster", "subspace_spread", "mirrored_pair")
REGRESSION_KINDS = ("none", "regression_hinge", "regression_label_flip")
CLUSTER_STD = 0.1  # cluster outliers are N(mu + M v, 0.01 I)
HINGE_BAND = (0.25, 0.35)  # hinge labels land in this band, in units of sigma_y


@dataclass(frozen=True)
class ContaminationSpec:
    """Outlier law: kind, displacement magnitude, and direction seeding."""

    kind: str
    magnitude: float = 0.0
    spread_count: int = 1
    direction_seed: int = 0

    def __post_init__(self):
        if self.kind not in MEAN_KINDS + REGRESSION_KINDS:
            raise ValueError(f"unknown contamination kind: {self.kind!r}")
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if self.spread_count < 1:
            raise ValueError("spread_count must be >= 1")

    def directions(self, d: int) -> np.ndarray:
        """spread_count orthonormal outlier directions, fixed by direction_seed."""
        if self.spread_count > d:
            raise ValueError("spread_count cannot exceed the dimension")
        rng = make_rng(self.direction_seed, 0xD1B)
        A = rng.standard_normal((d, self.spread_count))
        Q, R = np.linalg.qr(A)
        Q = Q * np.sign(np.diag(R))  # sign-fix for determinism
        return np.ascontiguousarray(Q.T)


@dataclass(frozen=True)
class RegressionInstance:
    """Design matrix, labels, and (for synthetic audits) the hidden truth."""

    xs: np.ndarray
    ys: np.ndarray
    labels: np.ndarray | None = None
    truth: tuple | None = None  # (beta, sigma)

    def __post_init__(self):
        xs = np.ascontiguousarray(self.xs, dtype=np.float64)
        ys = np.ascontiguousarray(self.ys, dtype=np.float64)
        if xs.ndim != 2 or ys.shape != (xs.shape[0],):
            raise ValueError("xs must be n-by-d and ys length n")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if self.labels is not None:
            lab = np.ascontiguousarray(self.labels, dtype=bool)
            if lab.shape != (xs.shape[0],):
                raise ValueError("labels must have length n")
            object.__setattr__(self, "labels", lab)
        if self.truth is not None:
            beta, sigma = self.truth
            if float(sigma) <= 0:
                raise ValueError("sigma must be positive")

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]


def gen_mean_instance(d: int, n: int, eps: float, mu, spec: ContaminationSpec,
                      rng: np.random.Generator) -> Dataset:
    """Draw an n-point Huber-contaminated Gaussian mean instance."""
    if not (0.0 <= eps < 0.5):
        raise ValueError("eps must lie in [0, 0.5)")
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.kind not in MEAN_KINDS:
        raise ValueError(f"{spec.kind!r} is not a mean-instance contamination")
    mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), (d,))
    X = mu + rng.standard_normal((n, d))
    labels = np.ones(n, dtype=bool)
    if spec.kind != "none" and eps > 0.0:
        out = rng.random(n) < eps
        labels = ~out
        n_out = int(out.sum())
        if n_out:
            dirs = spec.directions(d)
            v = dirs[0]
            M = spec.magnitude
            if spec.kind == "point_mass":
                X[out] = mu + M * v
            elif spec.kind == "cluster":
                X[out] = mu + M * v + CLUSTER_STD * rng.standard_normal((n_out, d))
            elif spec.kind == "subspace_spread":
                j = rng.integers(spec.spread_count, size=n_out)
                X[out] = mu + M * dirs[j]
            elif spec.kind == "mirrored_pair":
                signs = rng.choice([-1.0, 1.0], size=n_out)
                X[out] = signs[:, None] * (mu + M * v)
    return Dataset(X, labels)


def gen_regression_instance(d: int, n: int, eps: float, beta, sigma: float,
                            spec: ContaminationSpec,
                            rng: np.random.Generator) -> RegressionInstance:
    """Draw an n-pair Huber-contaminated Gaussian regression instance."""
    if float(sigma) <= 0:
        raise ValueError("sigma must be positive")
    if not (0.0 <= eps < 0.5):
        raise ValueError("eps must lie in [0, 0.5)")
    if spec.kind not in REGRESSION_KINDS:
        raise ValueError(f"{spec.kind!r} is not a regression contamination")
    beta = np.broadcast_to(np.asarray(beta, dtype=np.float64), (d,)).copy()
    X = rng.standard_normal((n, d))
    y = X @ beta + sigma * rng.standard_normal(n)
    labels = np.ones(n, dtype=bool)
    if spec.kind != "none" and eps > 0.0:
        out = rng.random(n) < eps
        labels = ~out
        n_out = int(out.sum())
        if n_out:
            sigma_y = math.sqrt(sigma**2 + float(beta @ beta))
            if spec.kind == "regression_hinge":
                v = spec.directions(d)[0]
                X[out] = spec.magnitude * v
                lo, hi = HINGE_BAND[0] * sigma_y, HINGE_BAND[1] * sigma_y
                y[out] = rng.uniform(lo, hi, size=n_out)
            elif spec.kind == "regression_label_flip":
                y[out] = -X[out] @ beta + sigma * rng.standard_normal(n_out)
    return RegressionInstance(X, y, labels, truth=(beta, float(sigma)))


def conditional_moments(beta, sigma: float, a: float,
                        half_length: float | None = None):
    """Moments of X | y = a (or y in [a-l, a+l]) under the clean model.

    Returns (mean, (iso, along)) encoding covariance = iso * I + along * bb^T
    for the unit vector b = beta/||beta||.  The point conditional is the
    Gaussian N((a / sigma_y^2) beta, I - beta beta^T / sigma_y^2); the
    interval version mixes it with the truncated-Gaussian weight on y, whose
    first two moments are computed by adaptive quadrature (abs tol 1e-10).
    """
    beta = np.asarray(beta, dtype=np.float64)
    b2 = float(beta @ beta)
    sigma_y_sq = float(sigma) ** 2 + b2
    if sigma_y_sq <= 0:
        raise ValueError("sigma_y^2 must be positive")
    if b2 == 0.0:
        return np.zeros_like(beta), (1.0, 0.0)
    if half_length is None:
        mean = (a / sigma_y_sq) * beta
        return mean, (1.0, -b2 / sigma_y_sq)
    sy = math.sqrt(sigma_y_sq)
    lo, hi = a - half_length, a + half_length

    def pdf(t):
        return math.exp(-0.5 * (t / sy) ** 2) / (sy * math.sqrt(2 * math.pi))

    mass, _ = integrate.quad(pdf, lo, hi, epsabs=1e-13, limit=200)
    m1, _ = integrate.quad(lambda t: t * pdf(t), lo, hi, epsabs=1e-13, limit=200)
    m2, _ = integrate.quad(lambda t: t * t * pdf(t), lo, hi, epsabs=1e-13, limit=200)
    if mass <= 0:
        raise ValueError("interval carries no probability mass")
    m1 /= mass
    m2 /= mass
    var_t = m2 - m1 * m1
    mean = (m1 / sigma_y_sq) * beta
    # law of total variance along beta: conditional variance 1 - b2/sy^2 plus
    # the variance of the conditional means (t/sy^2)*||beta|| over t ~ trunc.
    along = -b2 / sigma_y_sq + (b2 / sigma_y_sq**2) * var_t
    return mean, (1.0, float(along))


def dense_conditional_cov(beta, moments) -> np.ndarray:
    """Materialize the (iso, along) covariance encoding as a dense matrix."""
    beta = np.asarray(beta, dtype=np.float64)
    iso, along = moments
    d = beta.shape[0]
    C = iso * np.eye(d)
    b2 = float(beta @ beta)
    if b2 > 0:
        C += along * np.outer(beta, beta) / b2
    return C


def interval_mass(sigma_y: float, a: float, half_length: float) -> float:
    """Clean-model probability that y lands in [a-l, a+l]."""
    return float(stats.norm.cdf((a + half_length) / sigma_y)
                 - stats.norm.cdf((a - half_length) / sigma_y))

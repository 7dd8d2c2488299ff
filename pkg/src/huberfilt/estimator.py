"""Top-level estimators: robust mean, robust regression, trimmed mean.

The robust mean splits its sample, warm-starts and runs the spectral loop on
one part, and hands the set-aside subspace V to the low-dimensional
optimal-error routine evaluated on the held-out part.  The regression
estimator reduces to the mean estimator through conditioning on a random
label interval.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from .data import Dataset
from .datagen import RegressionInstance
from .errors import IntervalStarvedError
from .filtering import warm_start
from .lowdim import run_lowdim_report
from .params import AlgorithmParams
from .stage1 import run_stage1

KAPPA_N = 40.0    # recommended sample-size multiplier n >= kappa_n * d / eps^2
KAPPA_2 = 0.02    # held-out split multiplier (the held-out need is polylog-d)
KAPPA_MIN = 50.0  # minimum interval occupancy |S'| >= kappa_min / eps^2
MAX_INTERVAL_RETRIES = 5
A_MIN_FRAC = 0.05  # resample a while |a| <= 0.05 * sigma_y_hat


@dataclass
class MeanReport:
    """Robust mean estimate plus the run's observability trail."""

    mu_hat: np.ndarray
    dim_V: int
    stage1_trace: list
    lowdim_gamma_used: float | None
    wall_time: float
    seed: int
    warm_outcome: dict = field(default_factory=dict)
    inlier_mass_removed: float | None = None
    outlier_mass_removed: float | None = None
    filter_outcomes: list = field(default_factory=list)
    # final spectral-loop state, kept for post-hoc audits (certificate checks
    # need the weights, the set-aside basis, and which points the loop saw);
    # excluded from serialization and safe to null out to reclaim memory.
    stage1_w: np.ndarray | None = None
    stage1_basis: object | None = None
    main_indices: np.ndarray | None = None
    terminated: bool = True

    def to_json_dict(self) -> dict:
        return {
            "mu_hat": [float(v) for v in self.mu_hat],
            "dim_V": int(self.dim_V),
            "stage1_trace": [r.to_json_dict() for r in self.stage1_trace],
            "lowdim_gamma_used": self.lowdim_gamma_used,
            "wall_time": float(self.wall_time),
            "seed": int(self.seed),
            "warm_outcome": self.warm_outcome,
            "inlier_mass_removed": self.inlier_mass_removed,
            "outlier_mass_removed": self.outlier_mass_removed,
        }


@dataclass
class RegressionReport:
    """Robust regression estimate and the interval-conditioning diagnostics."""

    beta_hat: np.ndarray
    sigma_y_hat: float
    interval_center: float
    interval_half_length: float
    kept_count: int
    retries: int
    inner: MeanReport

    def __post_init__(self):
        if not self.interval_half_length > 0:
            raise ValueError("interval half-length must be positive")
        if abs(self.interval_center) < A_MIN_FRAC * self.sigma_y_hat:
            raise ValueError("interval center violates the resampling contract")

    def to_json_dict(self) -> dict:
        return {
            "beta_hat": [float(v) for v in self.beta_hat],
            "sigma_y_hat": float(self.sigma_y_hat),
            "interval_center": float(self.interval_center),
            "interval_half_length": float(self.interval_half_length),
            "kept_count": int(self.kept_count),
            "retries": int(self.retries),
            "inner": self.inner.to_json_dict(),
        }


def trimmed_mean(values, eps: float, trim_frac_mult: float = 4.0) -> float:
    """Average after dropping the ceil(mult*eps*n) smallest and largest values."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    n = vals.shape[0]
    if n < 1:
        raise ValueError("need at least one value")
    if not (0.0 < eps < 0.25):
        raise ValueError("eps must lie in (0, 1/4)")
    if n < 1.0 / eps:
        warnings.warn("trimmed_mean: fewer than 1/eps samples", stacklevel=2)
    m = math.ceil(trim_frac_mult * eps * n)
    if 2 * m >= n:
        raise ValueError("trimming removed every value")
    return float(vals[m:n - m].mean())


def robust_mean(samples: Dataset, eps: float, c: float = 0.5,
                params: AlgorithmParams | None = None,
                rng: np.random.Generator | None = None) -> MeanReport:
    """Huber-robust mean of an n-by-d sample; error O(eps/c) by design."""
    t0 = time.perf_counter()
    n, d = samples.n, samples.d
    if params is None:
        params = AlgorithmParams.for_instance(n, d, eps, c=c)
    if rng is None:
        rng = make_rng(params.seed)
    if n < KAPPA_N * d / eps**2:
        warnings.warn("robust_mean: n below the recommended kappa_n*d/eps^2",
                      stacklevel=2)
    n2 = min(n // 2, math.ceil(KAPPA_2 * (params.t_max + math.log(100.0)) / eps**2))
    perm = rng.permutation(n)
    held_idx, main_idx = perm[:n2], perm[n2:]
    main = samples.subset(main_idx)
    warm = warm_start(main, eps, params, rng)
    st1 = run_stage1(main, eps, params, rng, w0=warm.w_after)
    gamma_used = None
    if st1.basis.dim == 0 or n2 == 0:
        mu_hat = st1.mu_full
    else:
        held = samples.subset(held_idx)
        coords = st1.basis.span_coords(held.points)
        mu2, gamma_used, _ = run_lowdim_report(coords, eps, c, params, rng)
        mu_hat = st1.basis.project_off(st1.mu_full) + st1.basis.lift(mu2)
    inl = out = None
    if samples.labels is not None:
        removed = 1.0 - st1.w
        lab = main.labels
        inl = float(removed[lab].sum())
        out = float(removed[~lab].sum())
    wall = time.perf_counter() - t0
    return MeanReport(mu_hat=mu_hat, dim_V=st1.basis.dim, stage1_trace=st1.trace,
                      lowdim_gamma_used=gamma_used, wall_time=wall,
                      seed=params.seed, warm_outcome=warm.to_json_dict(),
                      inlier_mass_removed=inl, outlier_mass_removed=out,
                      filter_outcomes=list(st1.filter_outcomes),
                      stage1_w=st1.w, stage1_basis=st1.basis,
                      main_indices=main_idx, terminated=st1.terminated)


def robust_regression(pairs: RegressionInstance, eps: float, c: float = 0.5,
                      params: AlgorithmParams | None = None,
                      rng: np.random.Generator | None = None) -> RegressionReport:
    """Huber-robust linear regression via interval conditioning.

    Assumes ||beta|| = O(sigma * eps * log(1/eps)); for larger signals first
    reduce with baseline_center_regressor and add the two fits.
    """
    if rng is None:
        rng = make_rng(0 if params is None else params.seed)
    n, d = pairs.n, pairs.d
    sigma_y_hat = math.sqrt(trimmed_mean(pairs.ys**2, eps))
    ell = sigma_y_hat / math.log(1.0 / eps)
    min_kept = KAPPA_MIN / eps**2
    kept = None
    a = None
    retries = 0
    for attempt in range(MAX_INTERVAL_RETRIES + 1):
        a = 0.0
        while abs(a) <= A_MIN_FRAC * sigma_y_hat:
            a = float(rng.uniform(-sigma_y_hat, sigma_y_hat))
        mask = np.abs(pairs.ys - a) <= ell
        if int(mask.sum()) >= min_kept:
            kept = mask
            break
        retries = attempt + 1
    if kept is None:
        raise IntervalStarvedError(
            f"interval starved: <{min_kept:.0f} points in every tried interval "
            f"(n={n}, ell={ell:.4g}); increase n or eps")
    labels = None if pairs.labels is None else pairs.labels[kept]
    sub = Dataset(pairs.xs[kept], labels)
    eps_inner = min(10.0 * eps, 0.5)
    if params is None:
        inner_params = AlgorithmParams.for_instance(sub.n, d, eps_inner, c=c)
    else:
        inner_params = AlgorithmParams.for_instance(
            sub.n, d, eps_inner, c=c, c1=params.c1, c_stop=params.c_stop,
            kappa_T=params.kappa_T, hutchinson_probes=params.hutchinson_probes,
            trim_frac_mult=params.trim_frac_mult, seed=params.seed)
    inner = robust_mean(sub, eps_inner, c, inner_params, rng)
    beta_hat = (sigma_y_hat**2 / a) * inner.mu_hat
    return RegressionReport(beta_hat=beta_hat, sigma_y_hat=sigma_y_hat,
                            interval_center=a, interval_half_length=ell,
                            kept_count=int(sub.n), retries=retries, inner=inner)


def baseline_center_regressor(pairs: RegressionInstance, eps: float,
                              rounds: int = 10) -> np.ndarray:
    """Iterative trimmed least squares; best-effort warm start, no guarantee.

    Each round refits OLS on all points except the ceil(2*eps*n) largest
    absolute residuals of the current fit.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    X, y = pairs.xs, pairs.ys
    n = X.shape[0]
    drop = math.ceil(2.0 * eps * n)
    if n - drop <= X.shape[1]:
        raise ValueError("too few points to trim")
    keep = np.arange(n)
    beta = _ols(X, y)
    for _ in range(rounds):
        resid = np.abs(y - X @ beta)
        keep = np.argsort(resid, kind="stable")[:n - drop]
        beta = _ols(X[keep], y[keep])
    return beta


def _ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("rank-deficient design")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta

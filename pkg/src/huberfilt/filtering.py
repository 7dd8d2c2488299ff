"""Down-weighting filters.

The core primitive multiplies weights by (1 - tau/r)^l and binary-searches
the smallest exponent l whose surviving score mass drops below T*beta.  Two
wrappers drive it: the multi-directional filter (scores are squared sketch
projections against the 100 * tr(U^T U) threshold) and the warm-start
single-direction filter that bounds every covariance eigenvalue by
1 + O(eps * ln^2(1/eps)) before the main loop runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SketchMatrix, SubspaceBasis, as_weight_array
from .errors import ScoreExceedsCapError
from .linalg import build_moment_state, estimate_top_eigenvalue
from .params import AlgorithmParams

KAPPA_PRE = 10.0           # warm-start stopping threshold multiplier
SINGLE_DIR_THRESHOLD = 100.0  # squared-projection score cut for one direction


@dataclass(frozen=True)
class FilterOutcome:
    """Result of one filter call (or one aggregated warm-start run)."""

    w_after: np.ndarray
    steps_taken: int
    mass_removed_total: float
    mass_removed_inlier: float | None = None
    mass_removed_outlier: float | None = None
    stop_reason: str = "threshold_met"  # or "exponent_cap"
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "steps_taken": int(self.steps_taken),
            "mass_removed_total": float(self.mass_removed_total),
            "mass_removed_inlier": None if self.mass_removed_inlier is None
            else float(self.mass_removed_inlier),
            "mass_removed_outlier": None if self.mass_removed_outlier is None
            else float(self.mass_removed_outlier),
            "stop_reason": self.stop_reason,
            **{k: v for k, v in self.extra.items()},
        }


def _outcome(data: Dataset, w_before: np.ndarray, w_after: np.ndarray,
             steps: int, stop_reason: str, **extra) -> FilterOutcome:
    delta = w_before - w_after
    total = float(delta.sum())
    inl = out = None
    if data.labels is not None:
        inl = float(delta[data.labels].sum())
        out = float(delta[~data.labels].sum())
    return FilterOutcome(w_after=w_after, steps_taken=steps,
                         mass_removed_total=total, mass_removed_inlier=inl,
                         mass_removed_outlier=out, stop_reason=stop_reason,
                         extra=dict(extra))


def downweight(data: Dataset, w, tau: np.ndarray, r: float, T: float,
               beta: float) -> FilterOutcome:
    """Multiplicative down-weighting w * (1 - tau/r)^l with minimal l.

    The exponent is binary-searched over [0, ceil(r/(e*T)) + 1]; the score
    mass E_P[w_l * tau] is monotone in l and provably crosses T*beta before
    the cap, so stop_reason == "exponent_cap" flags a numerical anomaly.
    """
    w = as_weight_array(w, data.n)
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != w.shape or np.any(tau < 0):
        raise ValueError("tau must be a nonnegative length-n vector")
    # beta > 1 is the regime of the mass-accounting guarantee; beta in (0, 1]
    # is still a well-defined schedule and occurs for the regression
    # reduction's inner eps, so only positivity is enforced here.
    if not (r > 0 and T > 0 and beta > 0):
        raise ValueError("need r > 0, T > 0, beta > 0")
    if np.any((tau > r * (1 + 1e-12)) & (w > 0)):
        raise ScoreExceedsCapError("score exceeds cap")
    base = np.clip(1.0 - tau / r, 0.0, 1.0)

    def score_mass(ell: int) -> float:
        return float(np.mean(w * base**ell * tau))

    target = T * beta
    if score_mass(0) <= target:
        return _outcome(data, w, w.copy(), 0, "threshold_met")
    ell_max = math.ceil(r / (math.e * T)) + 1
    if score_mass(ell_max) > target:
        w_after = w * base**ell_max
        return _outcome(data, w, w_after, ell_max, "exponent_cap")
    lo, hi = 0, ell_max  # score_mass(lo) > target >= score_mass(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if score_mass(mid) <= target:
            hi = mid
        else:
            lo = mid
    w_after = w * base**hi
    return _outcome(data, w, w_after, hi, "threshold_met")


def multidirectional_filter(data: Dataset, w, eps: float, U: SketchMatrix,
                            params: AlgorithmParams) -> FilterOutcome:
    """Filter on scores g(x) = ||U (x - mu_w)||^2 above 100 * tr(U^T U).

    T = kappa_T * (eps / ln(1/eps)) * frob_sq per the filtering guarantee;
    when no supported point scores above the threshold the call is a no-op.
    """
    w = as_weight_array(w, data.n)
    sw = float(w.sum())
    if sw <= 0:
        raise ValueError("weights must have positive mass")
    mu_w = w @ data.points / sw
    proj = (data.points - mu_w) @ U.rows.T
    g = np.sum(proj * proj, axis=1)
    tau = np.where(g > 100.0 * U.frob_sq, g, 0.0)
    supported = tau[w > 0]
    r = float(supported.max()) if supported.size else 0.0
    if r <= 0.0:
        return _outcome(data, w, w.copy(), 0, "threshold_met")
    log_inv = math.log(1.0 / eps)
    T = params.kappa_T * (eps / log_inv) * U.frob_sq
    return downweight(data, w, tau, r, T, params.beta_filter)


def warm_start(data: Dataset, eps: float, params: AlgorithmParams,
               rng: np.random.Generator) -> FilterOutcome:
    """Single-direction preprocessing filter.

    Repeatedly finds the top covariance direction of the weighted sample and
    down-weights points whose squared projection exceeds 100, until the top
    eigenvalue estimate of B = W^2 Sigma - (1 - c1 eps) I falls below
    kappa_pre * eps * ln^2(1/eps).  steps_taken counts rounds here.
    """
    if not (0.0 < eps <= 0.5):
        raise ValueError("eps must lie in (0, 0.5]")
    w0 = np.ones(data.n)
    w = w0.copy()
    empty = SubspaceBasis.empty(data.d)
    log_inv = math.log(1.0 / eps)
    threshold = KAPPA_PRE * eps * log_inv**2
    stop_reason = "exponent_cap"
    rounds = 0
    lam = None
    for rounds in range(1, params.t_max + 1):
        state = build_moment_state(data, w, empty, eps, params.c1)
        lam, v = estimate_top_eigenvalue(state, params.p_prime, 1, rng)
        if lam <= threshold:
            stop_reason = "threshold_met"
            rounds -= 1
            break
        mu_w = state.mu_perp
        proj = (data.points - mu_w) @ v
        sq = proj * proj
        tau = np.where(sq > SINGLE_DIR_THRESHOLD, sq, 0.0)
        supported = tau[w > 0]
        r = float(supported.max()) if supported.size else 0.0
        if r <= 0.0:
            # eigenvalue still above threshold but no point is visibly
            # extreme along the witness; a single direction cannot make
            # progress, so stop and let the main loop take over.
            break
        T = params.kappa_T * eps / log_inv
        out = downweight(data, w, tau, r, T, params.beta_filter)
        w = out.w_after
    return _outcome(data, w0, w, rounds, stop_reason, lambda_hat_final=lam)

"""Optimal-error estimation in the (polylog-dimensional) set-aside space.

Pipeline: coordinatewise-median center and ball truncation, a top-k
eigenvector filtering loop run on one half of the data, then a sphere-cover
brute force (directional medians + slab feasibility) on the other half,
restricted to the span of the final top-k eigenvectors.  Dimensions here are
small by construction, so dense eigendecompositions are affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SubspaceBasis, as_weight_array
from .errors import CoverTooLargeError, InfeasibleError
from .filtering import downweight
from .params import AlgorithmParams

KAPPA_R = 3.0       # truncation radius R = kappa_R * sqrt(d' * ln(1/eps))
KAPPA_ITER = 10.0   # top-k loop iteration cap multiplier
KAPPA_GAMMA = 4.0   # default gamma = kappa_gamma * eps for the brute force
COVER_HARD_CAP = 10**7
COVER_ETA = 0.25


@dataclass(frozen=True)
class CoverSet:
    """Unit directions intended to be an eta-cover of the sphere."""

    directions: np.ndarray  # (M, k')
    eta: float

    def __post_init__(self):
        dirs = np.ascontiguousarray(self.directions, dtype=np.float64)
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("cover directions must be unit vectors")
        object.__setattr__(self, "directions", dirs)

    @property
    def size(self) -> int:
        return self.directions.shape[0]


def naive_center(data: Dataset, eps: float):
    """Coordinatewise median plus a 2R ball-truncation weight vector."""
    if data.n < 1:
        raise ValueError("need at least one point")
    center = np.median(data.points, axis=0)
    R = KAPPA_R * math.sqrt(data.d * math.log(1.0 / eps))
    dist = np.linalg.norm(data.points - center, axis=1)
    w0 = (dist <= 2.0 * R).astype(np.float64)
    return center, w0


def topk_filter_loop(data: Dataset, w0, eps: float, r: float,
                     params: AlgorithmParams):
    """Filter until the average of the top-k covariance eigenvalues is small.

    k = ceil(r * ln(1/eps)) clamped to the dimension; scores are squared
    projections onto the top-k eigenvectors scaled by 1/sqrt(k), thresholded
    at 100/r.  Returns (w, top_dirs, mu_w, flagged) where flagged reports an
    iteration-cap exit.
    """
    if not (0.0 < r < 1.0):
        raise ValueError("r must lie in (0, 1)")
    dprime = data.d
    w = as_weight_array(w0, data.n).copy()
    k = min(dprime, max(1, math.ceil(r * math.log(1.0 / eps))))
    cap = math.ceil(KAPPA_ITER * dprime * math.log(dprime / eps + 1.0)) + 1
    log_inv = math.log(1.0 / eps)
    stop_level = 1.0 + params.c_stop * eps / r
    flagged = True
    top = None
    mu_w = None
    for _ in range(cap):
        sw = float(w.sum())
        if sw <= 0:
            break
        mu_w = w @ data.points / sw
        centered = data.points - mu_w
        cov = (centered.T * w) @ centered / sw
        vals, vecs = np.linalg.eigh(cov)
        top = vecs[:, ::-1][:, :k].T  # rows are top eigenvectors
        if float(np.mean(vals[::-1][:k])) < stop_level:
            flagged = False
            break
        proj = centered @ (top.T / math.sqrt(k))
        g = np.sum(proj * proj, axis=1)
        tau = np.where(g > 100.0 / r, g, 0.0)
        supported = tau[w > 0]
        rmax = float(supported.max()) if supported.size else 0.0
        if rmax <= 0.0:
            break  # nothing visibly extreme; cannot make progress
        T = params.kappa_T * eps / log_inv
        out = downweight(data, w, tau, rmax, T, params.beta_filter)
        w = out.w_after
    if top is None or mu_w is None:
        raise ValueError("filter loop never produced a state")
    return w, SubspaceBasis(top), mu_w, flagged


def sphere_cover(k_prime: int, eta: float, rng: np.random.Generator) -> CoverSet:
    """Randomized eta-cover of the unit sphere in R^k'.

    Draws M = ceil(4 * M0 * ln(M0 / 0.01)) uniform directions with
    M0 = (1 + 2/eta)^k', which covers with probability >= 0.99; the property
    is validated statistically in tests, not certified.
    """
    if k_prime < 1:
        raise ValueError("k_prime must be >= 1")
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    if k_prime == 1:
        return CoverSet(np.array([[1.0], [-1.0]]), eta)
    m0 = (1.0 + 2.0 / eta) ** k_prime
    M = math.ceil(4.0 * m0 * math.log(m0 / 0.01))
    if M > COVER_HARD_CAP:
        raise CoverTooLargeError("cover too large")
    dirs = rng.standard_normal((M, k_prime))
    norms = np.linalg.norm(dirs, axis=1)
    ok = norms > 0
    dirs = dirs[ok] / norms[ok][:, None]
    dirs = np.unique(dirs, axis=0)
    return CoverSet(dirs, eta)


def directional_median(data, u: np.ndarray) -> float:
    """Lower median of the projections u^T x_i."""
    pts = data.points if isinstance(data, Dataset) else np.asarray(data)
    proj = pts @ np.asarray(u, dtype=np.float64)
    i = (proj.shape[0] - 1) // 2
    return float(np.partition(proj, i)[i])


def _lower_medians(coords: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    proj = coords @ dirs.T
    i = (coords.shape[0] - 1) // 2
    return np.partition(proj, i, axis=0)[i]


def feasible_point(constraints, tol: float = 1e-9, max_iters: int = 10**5) -> np.ndarray:
    """Point satisfying |u^T x - m_u| <= slack + tol for every constraint.

    constraints is a sequence of (u, m_u, slack) triples (or the equivalent
    stacked arrays).  Iterates cyclic projections onto the violated slabs,
    starting from the least-squares fit of u^T x = m_u, which is already
    feasible in the typical case.
    """
    us, ms, slacks = _stack_constraints(constraints)
    x, *_ = np.linalg.lstsq(us, ms, rcond=None)
    iters = 0
    while True:
        resid = us @ x - ms
        excess = np.abs(resid) - slacks
        if float(excess.max()) <= tol:
            return x
        violated = np.nonzero(excess > tol)[0]
        for i in violated:  # cyclic order within each sweep
            u = us[i]
            r = float(u @ x - ms[i])
            overshoot = abs(r) - slacks[i]
            if overshoot > 0:
                x = x - math.copysign(overshoot, r) * u / float(u @ u)
            iters += 1
            if iters >= max_iters:
                raise InfeasibleError("infeasible within tolerance")


def _stack_constraints(constraints):
    if isinstance(constraints, tuple) and len(constraints) == 3 \
            and isinstance(constraints[0], np.ndarray) and constraints[0].ndim == 2:
        us, ms, slacks = constraints
        slacks = np.broadcast_to(np.asarray(slacks, dtype=np.float64), ms.shape)
        return np.asarray(us, float), np.asarray(ms, float), slacks
    us = np.array([np.asarray(c[0], float) for c in constraints])
    ms = np.array([float(c[1]) for c in constraints])
    slacks = np.array([float(c[2]) for c in constraints])
    if np.any(slacks <= 0):
        raise ValueError("slack must be positive")
    return us, ms, slacks


def _brute_force_mean(coords: np.ndarray, eps: float, gamma: float,
                      rng: np.random.Generator):
    """Directional-median LP on a sphere cover; returns (point, gamma_used)."""
    k_prime = coords.shape[1]
    cover = sphere_cover(k_prime, COVER_ETA, rng)
    meds = _lower_medians(coords, cover.directions)
    for attempt, g in enumerate((gamma, 2.0 * gamma)):
        try:
            x = feasible_point((cover.directions, meds, np.full(meds.shape, 2.0 * g)))
            return x, g
        except InfeasibleError:
            if attempt == 1:
                raise
    raise AssertionError("unreachable")


def brute_force_mean(data_coords, eps: float, gamma: float | None = None,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Mean estimate within 4*gamma/(1 - eta) of the truth, via the cover LP."""
    coords = data_coords.points if isinstance(data_coords, Dataset) \
        else np.asarray(data_coords, dtype=np.float64)
    if gamma is None:
        gamma = KAPPA_GAMMA * eps
    if rng is None:
        rng = np.random.default_rng(0)
    x, _ = _brute_force_mean(coords, eps, gamma, rng)
    return x


def run_lowdim_report(data_coords, eps: float, r: float,
                      params: AlgorithmParams, rng: np.random.Generator):
    """run_lowdim plus diagnostics: returns (estimate, gamma_used, flagged)."""
    if isinstance(data_coords, Dataset):
        data = data_coords
    else:
        data = Dataset(np.asarray(data_coords, dtype=np.float64))
    n = data.n
    center, w_ball = naive_center(data, eps)
    perm = rng.permutation(n)
    half = n // 2
    idx1, idx2 = perm[half:], perm[:half]
    s1 = data.subset(idx1)
    w, top_dirs, mu_w, flagged = topk_filter_loop(s1, w_ball[idx1], eps, r, params)
    mu1 = top_dirs.project_off(mu_w)
    keep2 = w_ball[idx2] > 0
    coords2 = top_dirs.span_coords(data.points[idx2][keep2])
    if coords2.shape[0] < 1:
        raise ValueError("truncation removed every brute-force point")
    gamma = KAPPA_GAMMA * eps
    mu2, gamma_used = _brute_force_mean(coords2, eps, gamma, rng)
    estimate = mu1 + top_dirs.lift(mu2)
    return estimate, gamma_used, flagged


def run_lowdim(data_coords, eps: float, r: float, params: AlgorithmParams,
               rng: np.random.Generator) -> np.ndarray:
    """Optimal-error mean estimate of low-dimensional coordinates."""
    est, _, _ = run_lowdim_report(data_coords, eps, r, params, rng)
    return est

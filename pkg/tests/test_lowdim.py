"""Low-dimensional optimal-error pipeline: cover, medians, slabs, brute force."""

import math

import numpy as np
import pytest

from huberfilt import (ContaminationSpec, Dataset, brute_force_mean,
                       directional_median, feasible_point, gen_mean_instance,
                       make_rng, naive_center, run_lowdim, sphere_cover,
                       topk_filter_loop)
from huberfilt.errors import CoverTooLargeError, InfeasibleError
from huberfilt.lowdim import KAPPA_R, run_lowdim_report
from huberfilt.params import AlgorithmParams


def _params(n, d, eps, **kw):
    return AlgorithmParams.for_instance(n, d, eps, **kw)


# ---------------------------------------------------------------------------
# naive center
# ---------------------------------------------------------------------------

def test_naive_center_is_coordinatewise_median():
    pts = np.array([[0.0, 5.0], [1.0, 6.0], [2.0, 100.0]])
    center, w0 = naive_center(Dataset(pts), eps=0.1)
    np.testing.assert_array_equal(center, np.median(pts, axis=0))
    assert set(np.unique(w0)).issubset({0.0, 1.0})


def test_naive_center_truncates_beyond_2R():
    eps, d = 0.1, 4
    rng = make_rng(1)
    pts = rng.standard_normal((2000, d))
    R = KAPPA_R * math.sqrt(d * math.log(1 / eps))
    pts[0] = 2.0 * R + 1.0  # one coordinate vector far outside the ball
    pts[0, 1:] = 0.0
    center, w0 = naive_center(Dataset(pts), eps)
    assert w0[0] == 0.0
    assert w0[1:].mean() > 0.99  # Gaussian mass inside 2R is essentially 1


# ---------------------------------------------------------------------------
# top-k filter loop (with a dense independent check of the exit state)
# ---------------------------------------------------------------------------

def test_topk_loop_clean_data_no_filtering():
    eps, r, d, n = 0.05, 0.5, 4, 30_000
    data = gen_mean_instance(d, n, 0.0, np.zeros(d), ContaminationSpec("none"),
                             make_rng(2))
    w, top, mu_w, flagged = topk_filter_loop(data, np.ones(n), eps, r,
                                             _params(n, d, eps))
    assert not flagged
    np.testing.assert_array_equal(w, np.ones(n))
    assert np.linalg.norm(mu_w) <= 4 * eps
    k = min(d, max(1, math.ceil(r * math.log(1 / eps))))
    assert top.dim == k


def test_topk_loop_removes_planted_outliers_and_certifies_spectrum():
    eps, r, d, n = 0.05, 0.5, 4, 30_000
    rng = make_rng(3)
    pts = rng.standard_normal((n, d))
    m = int(eps * n)
    pts[:m] = np.array([30.0, 0.0, 0.0, 0.0])  # beyond sqrt(100/r) ~ 14
    labels = np.ones(n, dtype=bool)
    labels[:m] = False
    data = Dataset(pts, labels)
    params = _params(n, d, eps)
    w, top, mu_w, flagged = topk_filter_loop(data, np.ones(n), eps, r, params)
    assert not flagged
    assert w[:m].sum() <= 0.05 * m        # outliers crushed
    assert w[m:].sum() >= 0.99 * (n - m)  # inliers kept
    # independent dense verification of the stopping condition
    sw = w.sum()
    mu = w @ pts / sw
    cov = ((pts - mu).T * w) @ (pts - mu) / sw
    vals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    k = top.dim
    assert float(vals[:k].mean()) < 1.0 + params.c_stop * eps / r
    assert np.linalg.norm(mu) <= 4 * eps


def test_topk_loop_rejects_bad_r():
    data = Dataset(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        topk_filter_loop(data, np.ones(3), 0.05, 1.5, _params(3, 2, 0.05))


# ---------------------------------------------------------------------------
# sphere cover
# ---------------------------------------------------------------------------

def test_sphere_cover_k1_is_signs():
    cover = sphere_cover(1, 0.25, make_rng(4))
    np.testing.assert_array_equal(np.sort(cover.directions, axis=0),
                                  [[-1.0], [1.0]])


def test_sphere_cover_covers_k3_monte_carlo():
    # every random unit vector should be within eta of some cover direction
    cover = sphere_cover(3, 0.25, make_rng(5))
    rng = make_rng(6)
    probes = rng.standard_normal((2000, 3))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    # min distance via max inner product: ||u - v||^2 = 2 - 2 u.v
    best = (probes @ cover.directions.T).max(axis=1)
    dist = np.sqrt(np.maximum(2.0 - 2.0 * best, 0.0))
    assert float(dist.max()) <= 0.25


def test_sphere_cover_too_large_raises():
    with pytest.raises(CoverTooLargeError):
        sphere_cover(12, 0.25, make_rng(7))


def test_sphere_cover_rejects_bad_args():
    with pytest.raises(ValueError):
        sphere_cover(0, 0.25, make_rng(0))
    with pytest.raises(ValueError):
        sphere_cover(2, 1.5, make_rng(0))


# ---------------------------------------------------------------------------
# directional median / feasibility
# ---------------------------------------------------------------------------

def test_directional_median_is_lower_median():
    pts = np.array([[1.0], [3.0], [2.0], [10.0]])
    # even count: lower median is the 2nd smallest
    assert directional_median(Dataset(pts), np.array([1.0])) == 2.0
    assert directional_median(pts[:3], np.array([1.0])) == 2.0


def test_directional_median_respects_direction():
    pts = np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]])
    assert directional_median(pts, np.array([0.0, 1.0])) == 2.0
    assert directional_median(pts, np.array([0.0, -1.0])) == -2.0


def test_feasible_point_grid_oracle():
    # brute-force grid search certifies the slab system's solution set; the
    # iterative solver must land inside it
    rng = make_rng(8)
    k = 4
    x_true = rng.uniform(-1, 1, size=k)
    us = rng.standard_normal((40, k))
    us /= np.linalg.norm(us, axis=1, keepdims=True)
    ms = us @ x_true + rng.uniform(-0.05, 0.05, size=40)
    slacks = np.full(40, 0.08)
    x = feasible_point((us, ms, slacks))
    assert float(np.max(np.abs(us @ x - ms) - slacks)) <= 1e-9
    # solution is near the ground truth that generated the constraints
    assert np.linalg.norm(x - x_true) <= 0.3


def test_feasible_point_accepts_triples():
    x = feasible_point([(np.array([1.0, 0.0]), 2.0, 0.5),
                        (np.array([0.0, 1.0]), -1.0, 0.5)])
    assert abs(x[0] - 2.0) <= 0.5 + 1e-9
    assert abs(x[1] + 1.0) <= 0.5 + 1e-9


def test_feasible_point_infeasible_raises():
    cons = [(np.array([1.0]), 0.0, 0.1), (np.array([1.0]), 10.0, 0.1)]
    with pytest.raises(InfeasibleError):
        feasible_point(cons, max_iters=2000)


def test_feasible_point_rejects_nonpositive_slack():
    with pytest.raises(ValueError):
        feasible_point([(np.array([1.0]), 0.0, 0.0)])


# ---------------------------------------------------------------------------
# brute force + full pipeline
# ---------------------------------------------------------------------------

def test_brute_force_mean_error_bound_clean():
    eps, gamma, k = 0.05, 0.1, 3
    rng = make_rng(9)
    shift = np.array([0.3, -0.2, 0.1])
    coords = shift + rng.standard_normal((4000, k))
    est = brute_force_mean(coords, eps, gamma=gamma, rng=make_rng(10))
    # directional medians are gamma-accurate, so the feasible point is
    # within 4*gamma/(1 - eta) of the truth (eta = 1/4)
    assert np.linalg.norm(est - shift) <= 4 * gamma / (1 - 0.25)


def test_brute_force_mean_with_contamination():
    eps, gamma, k = 0.1, 0.4, 2
    rng = make_rng(11)
    n = 5000
    coords = rng.standard_normal((n, k))
    coords[: int(eps * n)] = np.array([8.0, 8.0])
    est = brute_force_mean(coords, eps, gamma=gamma, rng=make_rng(12))
    assert np.linalg.norm(est) <= 4 * gamma / (1 - 0.25)


def test_run_lowdim_point_mass_in_low_dim():
    eps, r, d = 0.05, 0.5, 3
    n = 60_000
    spec = ContaminationSpec("point_mass", 20.0, direction_seed=13)
    data = gen_mean_instance(d, n, eps, np.zeros(d), spec, make_rng(13, 0))
    est, gamma_used, flagged = run_lowdim_report(data, eps, r,
                                                 _params(n, d, eps),
                                                 make_rng(13, 1))
    assert not flagged
    assert gamma_used in (4 * eps, 8 * eps)
    # optimal-error regime: well below the 4*eps coarse bound
    assert np.linalg.norm(est) <= 2.5 * eps


def test_run_lowdim_translation_consistency():
    # shifting every point shifts the estimate by the same vector
    eps, r, d, n = 0.05, 0.5, 2, 20_000
    rng = make_rng(14)
    pts = rng.standard_normal((n, d))
    shift = np.array([2.0, -1.0])
    a = run_lowdim(pts, eps, r, _params(n, d, eps), make_rng(15))
    b = run_lowdim(pts + shift, eps, r, _params(n, d, eps), make_rng(15))
    assert np.linalg.norm((b - a) - shift) <= 0.05

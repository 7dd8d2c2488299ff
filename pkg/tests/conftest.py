"""Shared test helpers: dense oracles and synthetic state builders."""

import numpy as np
import pytest

from huberfilt import Dataset, SubspaceBasis
from huberfilt.linalg import build_moment_state


def dense_bperp(X, w, V, eps, c1):
    """Dense construction of W^2 Sigma_perp - (1 - c1 eps) Pi for small d."""
    d = X.shape[1]
    Pi = np.eye(d) - V.T @ V if V.size else np.eye(d)
    sw = w.sum()
    W = w.mean()
    Xp = X @ Pi
    mu = w @ Xp / sw
    C = ((Xp - mu).T * w) @ (Xp - mu) / sw
    return W**2 * C - (1.0 - c1 * eps) * Pi


def random_instance(rng, max_n=32, max_d=8, max_basis=3):
    """Random (Dataset, weights, basis) triple for oracle comparisons."""
    n = int(rng.integers(2, max_n + 1))
    d = int(rng.integers(1, max_d + 1))
    X = rng.standard_normal((n, d)) * rng.uniform(0.5, 3.0)
    w = rng.uniform(0.05, 1.0, size=n)
    m = int(rng.integers(0, min(d, max_basis) + 1))
    if m:
        Q, _ = np.linalg.qr(rng.standard_normal((d, m)))
        V = np.ascontiguousarray(Q.T)
    else:
        V = np.zeros((0, d))
    return Dataset(X), w, V


def state_with_spectrum(eigs, eps=0.05, c1=10.0, rot=None):
    """Moment state whose B_perp operator has exactly the given eigenvalues.

    Uses 2d symmetric points +/- sqrt(s_j d) e_j so the weighted covariance is
    diag(s) with s_j = eig_j + (1 - c1 eps); optionally rotated.
    """
    eigs = np.asarray(eigs, dtype=np.float64)
    d = eigs.shape[0]
    s = eigs + (1.0 - c1 * eps)
    if np.any(s < 0):
        raise ValueError("spectrum not reachable with these (eps, c1)")
    pts = np.zeros((2 * d, d))
    for j in range(d):
        a = np.sqrt(s[j] * d)
        pts[2 * j, j] = a
        pts[2 * j + 1, j] = -a
    if rot is not None:
        pts = pts @ rot.T
    data = Dataset(pts)
    return build_moment_state(data, np.ones(2 * d), SubspaceBasis.empty(d),
                              eps, c1)


def rel_op_error(got, want, B, z):
    """Error relative to the operator scale ||B||*||z|| (robust near zero)."""
    # floor the scale: when B is exactly zero (e.g. V spans R^d) the output
    # is pure rounding residue and an absolute comparison is the right one
    scale = max(np.linalg.norm(B, 2) * np.linalg.norm(z), 1e-2)
    return float(np.linalg.norm(np.asarray(got) - np.asarray(want)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

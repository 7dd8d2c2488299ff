"""Matrix-free linear algebra for the spectral filtering loop.

The central object is the operator

    B_perp = W^2 * Sigma_perp - (1 - c1*eps) * Pi

where Pi projects onto the orthogonal complement of the set-aside subspace V,
Sigma_perp is the weighted covariance of the projected points, and
W = mean(w).  B_perp is only ever applied to vectors; a matvec costs
O(n*d + m*d) and multiple vectors are applied as one BLAS-3 block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import (CACHE_TOL, Dataset, SketchMatrix, SubspaceBasis,
                   as_weight_array, check_sketch_nonzero, gram_schmidt_append)
from .errors import DegenerateWeightsError


@dataclass(frozen=True)
class MomentOperatorState:
    """Weighted-moment caches plus everything needed to apply B_perp."""

    data: Dataset
    w: np.ndarray
    basis: SubspaceBasis
    eps: float
    c1: float
    W: float          # mean weight
    mu_perp: np.ndarray  # weighted mean projected onto the complement of V
    sum_w: float
    # lazily-built single-precision copies of the moment caches; power
    # iteration is memory-bandwidth bound, and halving the bytes streamed
    # per matvec keeps the point matrix cache-resident at larger d
    _f32: dict = field(default_factory=dict, repr=False, compare=False)

    def verify_caches(self) -> None:
        """Assert the cached moments match recomputation to 1e-12 relative."""
        sw = float(self.w.sum())
        W = sw / self.data.n
        mu = self.basis.project_off(self.w @ self.data.points / sw)
        assert abs(W - self.W) <= CACHE_TOL * max(abs(W), 1.0)
        scale = max(float(np.linalg.norm(mu)), 1.0)
        assert float(np.linalg.norm(mu - self.mu_perp)) <= CACHE_TOL * scale

    def matmat(self, Z: np.ndarray) -> np.ndarray:
        """Apply B_perp to the columns of a d-by-s block."""
        X = self.data.points
        Zp = self.basis.project_off(Z.T).T          # (d, s) columns in V-perp
        Y = X @ Zp                                  # (n, s)
        Y -= self.mu_perp @ Zp                      # center: (x_i - mu)^T z
        Y *= self.w[:, None]
        sy = Y.sum(axis=0)                          # (s,) = sum_i w_i y_i
        S = X.T @ Y                                 # (d, s)
        out = self.basis.project_off(S.T).T
        out -= np.outer(self.mu_perp, sy)
        out *= self.W**2 / self.sum_w
        out -= (1.0 - self.c1 * self.eps) * Zp
        return out

    def matvec(self, z: np.ndarray) -> np.ndarray:
        return self.matmat(np.asarray(z, dtype=np.float64)[:, None])[:, 0]

    def matmat_f32(self, Z: np.ndarray) -> np.ndarray:
        """Single-precision matmat; same operator, ~1e-6 relative accuracy."""
        c = self._f32
        if not c:
            c["X"] = self.data.points.astype(np.float32)
            c["w"] = self.w.astype(np.float32)
            c["mu"] = self.mu_perp.astype(np.float32)
            c["V"] = self.basis.vectors.astype(np.float32)
        X, w, mu, Vb = c["X"], c["w"], c["mu"], c["V"]
        Z = np.asarray(Z, dtype=np.float32)
        Zp = Z - Vb.T @ (Vb @ Z) if Vb.size else Z.copy()
        Y = X @ Zp
        Y -= mu @ Zp
        Y *= w[:, None]
        sy = Y.sum(axis=0)
        S = X.T @ Y
        if Vb.size:
            S -= Vb.T @ (Vb @ S)
        S -= np.outer(mu, sy)
        S *= np.float32(self.W**2 / self.sum_w)
        S -= np.float32(1.0 - self.c1 * self.eps) * Zp
        return S


def build_moment_state(data: Dataset, w, basis: SubspaceBasis, eps: float,
                       c1: float) -> MomentOperatorState:
    """Compute the weighted-moment caches for B_perp matvecs."""
    warr = as_weight_array(w, data.n)
    sum_w = float(warr.sum())
    if sum_w <= 0.0:
        raise DegenerateWeightsError("degenerate weights: total mass is zero")
    W = sum_w / data.n
    mu_perp = basis.project_off(warr @ data.points / sum_w)
    return MomentOperatorState(data=data, w=warr, basis=basis, eps=float(eps),
                               c1=float(c1), W=W, mu_perp=mu_perp, sum_w=sum_w)


def bperp_matvec(state: MomentOperatorState, z: np.ndarray) -> np.ndarray:
    """B_perp z without materializing any d-by-d matrix."""
    return state.matvec(z)


def power_apply(state: MomentOperatorState, z: np.ndarray, m: int) -> np.ndarray:
    """(B_perp)^m z via m successive matvecs (columns of a block accepted)."""
    if m < 1:
        raise ValueError("power must be >= 1")
    Z = np.asarray(z, dtype=np.float64)
    single = Z.ndim == 1
    if single:
        Z = Z[:, None]
    for _ in range(m):
        Z = state.matmat(Z)
    return Z[:, 0] if single else Z


def estimate_top_eigenvalue(state: MomentOperatorState, p_prime: int,
                            trials: int, rng: np.random.Generator,
                            rel_tol: float = 1e-6):
    """Power iteration for the top (largest-magnitude) eigenvalue of B_perp.

    Runs up to p_prime normalized iterations per trial (all trials batched as
    one block) and stops a trial early once its Rayleigh quotient is stable to
    rel_tol on two consecutive steps; the fixed-power iterate and the early
    stop agree to the requested tolerance.  The iteration itself runs in
    single precision (the loop is memory-bandwidth bound and only needs to
    locate the direction); the returned value is the double-precision
    Rayleigh quotient of the best iterate, whose error is quadratic in the
    iterate's directional error.  Returns (lambda_hat, witness) with
    lambda_hat the best Rayleigh quotient v^T B v over unit iterates v.
    If every trial collapses numerically to zero, returns (0, e_1).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    d = state.data.d
    Z = rng.standard_normal((d, trials))
    norms = np.linalg.norm(Z, axis=0)
    norms[norms == 0.0] = 1.0
    V = (Z / norms).astype(np.float32)
    best_val = None
    best_vec = None
    prev_ray = np.full(trials, np.inf)
    streak = np.zeros(trials, dtype=int)
    alive = np.ones(trials, dtype=bool)
    for _ in range(p_prime):
        U = state.matmat_f32(V)
        ray = np.einsum("ij,ij->j", V, U, dtype=np.float64)
        for j in range(trials):
            if not alive[j]:
                continue
            if best_val is None or ray[j] > best_val:
                best_val = float(ray[j])
                best_vec = V[:, j].copy()
        close = np.abs(ray - prev_ray) <= rel_tol * np.maximum(np.abs(ray), 1e-300)
        streak = np.where(close, streak + 1, 0)
        prev_ray = ray
        unorms = np.linalg.norm(U, axis=0)
        dead = unorms <= 1e-30
        alive &= ~dead
        alive &= streak < 2
        if not alive.any():
            break
        unorms[unorms == 0.0] = 1.0
        V = U / unorms
    if best_vec is None:
        e1 = np.zeros(d)
        e1[0] = 1.0
        return 0.0, e1
    v = best_vec.astype(np.float64)
    v /= np.linalg.norm(v)
    return float(v @ state.matvec(v)), v


def hutchinson_frobenius_sq(state: MomentOperatorState, m: int, probes: int,
                            rng: np.random.Generator) -> float:
    """Unbiased Monte Carlo estimate of tr((B_perp)^(2m)) = ||(B_perp)^m||_F^2."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    Z = rng.standard_normal((state.data.d, probes))
    U = power_apply(state, Z, m)
    return float(np.mean(np.sum(U * U, axis=0)))


def gaussian_sketch(state: MomentOperatorState, k: int, p: int,
                    rng: np.random.Generator) -> SketchMatrix:
    """Sketch with rows (B_perp)^p z_j for k independent Gaussian z_j."""
    if k < 1:
        raise ValueError("k must be >= 1")
    Z = rng.standard_normal((state.data.d, k))
    rows = power_apply(state, Z, p).T
    return SketchMatrix(rows=rows)


def near_orthogonality_check(U: SketchMatrix, k: int) -> bool:
    """Pairwise coherence <= 1/k^2 and max row norm^2 <= (ln k / k) * frob_sq.

    When true, the Gershgorin argument gives ||U^T U||_op <= 2*frob_sq*ln(k)/k.
    """
    norms = check_sketch_nonzero(U)
    if U.k != k:
        raise ValueError("sketch row count disagrees with k")
    if k == 1:
        return False  # ln(1)/1 * frob_sq = 0 can never dominate a norm
    if float(np.max(norms)) ** 2 > (np.log(k) / k) * U.frob_sq:
        return False
    G = np.abs(U.rows @ U.rows.T)
    limit = np.outer(norms, norms) / float(k) ** 2
    np.fill_diagonal(G, 0.0)
    np.fill_diagonal(limit, np.inf)
    return bool(np.all(G <= limit))


def estimate_alignment_probability(state: MomentOperatorState, p: int, k: int,
                                   pairs: int, rng: np.random.Generator) -> float:
    """Monte Carlo estimate of q = Pr[|<Mz, Mz'>| > ||Mz|| ||Mz'|| / k^2].

    M = (B_perp)^p.  Images are shared across pairs (s images give s(s-1)/2
    pairs), so the estimate is a U-statistic; the exact requested number of
    distinct unordered pairs is used, in a fixed order.  Pairs in which either
    image is numerically zero count as aligned (a collapsed spectrum is the
    Case-2 signal).
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    s = 2
    while s * (s - 1) // 2 < pairs:
        s += 1
    Z = rng.standard_normal((state.data.d, s))
    imgs = power_apply(state, Z, p)
    norms = np.linalg.norm(imgs, axis=0)
    G = np.abs(imgs.T @ imgs)
    thresh = np.outer(norms, norms) / float(k) ** 2
    iu, ju = np.triu_indices(s, k=1)
    iu, ju = iu[:pairs], ju[:pairs]
    zero = (norms[iu] <= 1e-300) | (norms[ju] <= 1e-300)
    aligned = (G[iu, ju] > thresh[iu, ju]) | zero
    return float(np.mean(aligned))


def extend_basis(basis: SubspaceBasis, u: np.ndarray, tol: float | None = None):
    """Gram-Schmidt u into the basis; returns (basis, appended)."""
    return gram_schmidt_append(basis, u, tol)


def project_points(data: Dataset, basis: SubspaceBasis, mode: str) -> Dataset:
    """Project points onto V ("span-coordinates") or off V ("complement-ambient")."""
    if mode == "span-coordinates":
        if basis.dim == 0:
            raise ValueError("span-coordinates of an empty basis is zero-dimensional")
        return Dataset(basis.span_coords(data.points), data.labels)
    if mode == "complement-ambient":
        return Dataset(basis.project_off(data.points), data.labels)
    raise ValueError(f"unknown projection mode: {mode!r}")

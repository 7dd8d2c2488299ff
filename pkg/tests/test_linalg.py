"""Matrix-free operator tests against dense oracles and closed forms."""

import math

import numpy as np
import pytest

from huberfilt import (Dataset, SketchMatrix, SubspaceBasis,
                       estimate_alignment_probability,
                       estimate_top_eigenvalue, extend_basis, gaussian_sketch,
                       hutchinson_frobenius_sq, near_orthogonality_check,
                       power_apply, project_points)
from huberfilt.errors import (DegenerateSketchError, DegenerateWeightsError,
                              FullSpaceError)
from huberfilt.linalg import bperp_matvec, build_moment_state

from conftest import (dense_bperp, random_instance, rel_op_error,
                      state_with_spectrum)

EPS = 0.05
C1 = 10.0


# ---------------------------------------------------------------------------
# dense oracle: the matvec is the dense matrix to near machine precision
# ---------------------------------------------------------------------------

def test_matvec_matches_dense_oracle_200_instances():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        data, w, V = random_instance(rng)
        basis = SubspaceBasis(V)
        state = build_moment_state(data, w, basis, EPS, C1)
        B = dense_bperp(data.points, w, V, EPS, C1)
        z = rng.standard_normal(data.d)
        worst = max(worst, rel_op_error(bperp_matvec(state, z), B @ z, B, z))
    assert worst <= 1e-10


def test_matmat_block_equals_columnwise_matvecs(rng):
    data, w, V = random_instance(rng, max_d=8)
    state = build_moment_state(data, w, SubspaceBasis(V), EPS, C1)
    Z = rng.standard_normal((data.d, 5))
    block = state.matmat(Z)
    for j in range(5):
        np.testing.assert_allclose(block[:, j], state.matvec(Z[:, j]),
                                   rtol=0, atol=1e-12)


def test_operator_is_symmetric(rng):
    for _ in range(20):
        data, w, V = random_instance(rng)
        state = build_moment_state(data, w, SubspaceBasis(V), EPS, C1)
        y = rng.standard_normal(data.d)
        z = rng.standard_normal(data.d)
        lhs = float(y @ state.matvec(z))
        rhs = float(z @ state.matvec(y))
        scale = max(abs(lhs), abs(rhs), 1.0)
        assert abs(lhs - rhs) <= 1e-10 * scale


def test_range_lies_in_complement_of_basis(rng):
    data, w, V = random_instance(rng, max_d=8, max_basis=3)
    if V.shape[0] == 0:
        V = np.eye(data.d)[:1]
    state = build_moment_state(data, w, SubspaceBasis(V), EPS, C1)
    z = rng.standard_normal(data.d)
    out = state.matvec(z)
    # output has no component inside V
    assert np.max(np.abs(V @ out)) <= 1e-12 * max(np.linalg.norm(out), 1.0)
    # and basis directions are in the kernel
    assert np.linalg.norm(state.matvec(V[0])) <= 1e-12


def test_power_apply_composes(rng):
    data, w, V = random_instance(rng)
    state = build_moment_state(data, w, SubspaceBasis(V), EPS, C1)
    B = dense_bperp(data.points, w, V, EPS, C1)
    z = rng.standard_normal(data.d)
    for m in (1, 2, 5):
        want = np.linalg.matrix_power(B, m) @ z
        got = power_apply(state, z, m)
        assert rel_op_error(got, want, np.linalg.matrix_power(B, m), z) <= 1e-9


def test_power_apply_rejects_zero_power(rng):
    data, w, V = random_instance(rng)
    state = build_moment_state(data, w, SubspaceBasis(V), EPS, C1)
    with pytest.raises(ValueError):
        power_apply(state, np.zeros(data.d), 0)


def test_build_state_rejects_zero_mass():
    data = Dataset(np.ones((4, 3)))
    with pytest.raises(DegenerateWeightsError):
        build_moment_state(data, np.zeros(4), SubspaceBasis.empty(3), EPS, C1)


def test_verify_caches_passes_on_fresh_state(rng):
    data, w, V = random_instance(rng)
    state = build_moment_state(data, w, SubspaceBasis(V), EPS, C1)
    state.verify_caches()


# ---------------------------------------------------------------------------
# top eigenvalue estimation
# ---------------------------------------------------------------------------

def test_top_eigenvalue_gapped_spectrum_100_runs():
    # B has eigenvalues (3, 1, 0); power iteration must land near 3.
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        state = state_with_spectrum(np.array([3.0, 1.0, 0.0]))
        lam, v = estimate_top_eigenvalue(state, 64, 3, rng)
        if 2.7 <= lam <= 3.0 + 1e-9:
            hits += 1
            # witness aligns with e_1 up to sign
            assert abs(abs(v[0]) - 1.0) <= 1e-3
    assert hits == 100


def test_top_eigenvalue_rank_one_rotated(rng):
    d = 6
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eigs = np.zeros(d)
    eigs[0] = 2.5
    state = state_with_spectrum(eigs, rot=Q)
    lam, v = estimate_top_eigenvalue(state, 96, 4, rng)
    assert lam == pytest.approx(2.5, rel=1e-6)
    assert abs(abs(v @ Q[:, 0]) - 1.0) <= 1e-5


def test_top_eigenvalue_witness_is_unit_and_rayleigh_consistent(rng):
    state = state_with_spectrum(np.array([1.2, 0.4, 0.1, 0.0]))
    lam, v = estimate_top_eigenvalue(state, 64, 2, rng)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)
    assert float(v @ state.matvec(v)) == pytest.approx(lam, rel=1e-9)


def test_top_eigenvalue_rejects_bad_trials(rng):
    state = state_with_spectrum(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        estimate_top_eigenvalue(state, 8, 0, rng)


# ---------------------------------------------------------------------------
# Hutchinson trace estimation
# ---------------------------------------------------------------------------

def test_hutchinson_matches_dense_trace():
    # E ||B^m z||^2 = tr(B^{2m}); with diag B the truth is sum eig^{2m}.
    eigs = np.array([2.0, 1.0, 0.5, 0.0])
    m = 2
    true = float(np.sum(eigs ** (2 * m)))
    state = state_with_spectrum(eigs)
    rng = np.random.default_rng(3)
    est = np.mean([hutchinson_frobenius_sq(state, m, 64, rng)
                   for _ in range(40)])
    # MC std of a single probe is ~sqrt(2 sum eig^4m); 2560 probes total
    assert est == pytest.approx(true, rel=0.08)


def test_hutchinson_single_probe_unbiasedness_dense_oracle(rng):
    data, w, V = random_instance(rng, max_d=5)
    state = build_moment_state(data, w, SubspaceBasis(V), EPS, C1)
    B = dense_bperp(data.points, w, V, EPS, C1)
    true = float(np.trace(np.linalg.matrix_power(B, 4)))
    est = np.mean([hutchinson_frobenius_sq(state, 2, 32, rng)
                   for _ in range(300)])
    assert est == pytest.approx(true, rel=0.1, abs=1e-9)


def test_hutchinson_rejects_zero_probes(rng):
    state = state_with_spectrum(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        hutchinson_frobenius_sq(state, 2, 0, rng)


# ---------------------------------------------------------------------------
# Gaussian sketch + near-orthogonality check
# ---------------------------------------------------------------------------

def test_gaussian_sketch_rows_live_in_power_image(rng):
    eigs = np.zeros(6)
    eigs[0] = 2.0  # rank-one B: every sketch row is parallel to e_1
    state = state_with_spectrum(eigs)
    U = gaussian_sketch(state, k=4, p=3, rng=rng)
    assert U.k == 4
    for row in U.rows:
        assert np.linalg.norm(row[1:]) <= 1e-9 * max(np.linalg.norm(row), 1.0)
    assert U.frob_sq == pytest.approx(float(np.sum(U.rows**2)), rel=1e-12)


def test_near_orthogonality_accepts_scaled_identity_rows():
    k = 8
    rows = np.eye(k) * 3.0
    assert near_orthogonality_check(SketchMatrix(rows), k)


def test_near_orthogonality_rejects_aligned_rows():
    k = 8
    rows = np.tile(np.eye(k)[:1], (k, 1))  # all rows equal
    assert not near_orthogonality_check(SketchMatrix(rows), k)


def test_near_orthogonality_rejects_dominant_row_norm():
    k = 8
    rows = np.eye(k).copy()
    rows[0, 0] = 50.0  # one row carries almost all the Frobenius mass
    assert not near_orthogonality_check(SketchMatrix(rows), k)


def test_near_orthogonality_k1_is_false():
    assert not near_orthogonality_check(SketchMatrix(np.ones((1, 3))), 1)


def test_near_orthogonality_implies_gershgorin_operator_bound(rng):
    # whenever the check passes, ||U^T U||_op <= 2 ln(k)/k * frob_sq
    k, d = 16, 64
    accepted = 0
    for _ in range(50):
        Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
        scales = rng.uniform(0.8, 1.2, size=k)
        noise = rng.uniform(0.0, 2e-2) * rng.standard_normal((k, d))
        rows = (Q.T * scales[:, None]) + noise
        U = SketchMatrix(rows)
        if near_orthogonality_check(U, k):
            accepted += 1
            op = float(np.linalg.eigvalsh(rows @ rows.T)[-1])
            assert op <= 2.0 * math.log(k) / k * U.frob_sq
    assert accepted > 0  # small perturbations of orthogonal rows should pass


def test_near_orthogonality_zero_row_raises():
    rows = np.vstack([np.zeros(3), np.ones(3)])
    with pytest.raises(DegenerateSketchError):
        near_orthogonality_check(SketchMatrix(rows), 2)


# ---------------------------------------------------------------------------
# alignment probability
# ---------------------------------------------------------------------------

def test_alignment_probability_closed_form_d2():
    # With B = I on d=2 (p arbitrary), images are isotropic directions and
    # q = Pr[|cos angle| > 1/k^2] = 1 - (2/pi) asin(1/k^2).
    k = 10
    true = 1.0 - (2.0 / math.pi) * math.asin(1.0 / k**2)
    state = state_with_spectrum(np.array([1.0, 1.0]))
    rng = np.random.default_rng(11)
    est = np.mean([estimate_alignment_probability(state, 1, k, 496, rng)
                   for _ in range(40)])
    assert est == pytest.approx(true, abs=0.01)


def test_alignment_probability_isotropic_high_dim_is_small(rng):
    # isotropic images in d=64: |cos| > 1/k^2 with k=2 means |cos| > 0.25,
    # which has probability ~ exp(-d/32); must be far below 0.5
    d = 64
    state = state_with_spectrum(np.ones(d))
    q = estimate_alignment_probability(state, 1, 2, 496, rng)
    assert q <= 0.15


def test_alignment_probability_rank_one_is_one(rng):
    eigs = np.zeros(8)
    eigs[0] = 2.0
    state = state_with_spectrum(eigs)
    q = estimate_alignment_probability(state, 2, 8, 100, rng)
    assert q == 1.0


def test_alignment_probability_rejects_zero_pairs(rng):
    state = state_with_spectrum(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        estimate_alignment_probability(state, 1, 4, 0, rng)


# ---------------------------------------------------------------------------
# basis extension and projections
# ---------------------------------------------------------------------------

def test_extend_basis_grows_orthonormal(rng):
    d = 6
    basis = SubspaceBasis.empty(d)
    for _ in range(d):
        basis, appended = extend_basis(basis, rng.standard_normal(d))
        assert appended
    G = basis.vectors @ basis.vectors.T
    np.testing.assert_allclose(G, np.eye(d), atol=1e-10)
    with pytest.raises(FullSpaceError):
        extend_basis(basis, rng.standard_normal(d))


def test_extend_basis_skips_spanned_vector(rng):
    d = 5
    basis = SubspaceBasis.empty(d)
    u = rng.standard_normal(d)
    basis, _ = extend_basis(basis, u)
    basis2, appended = extend_basis(basis, 3.0 * u + 1e-12 * rng.standard_normal(d))
    assert not appended and basis2.dim == 1


def test_extend_basis_rejects_zero_vector():
    with pytest.raises(ValueError):
        extend_basis(SubspaceBasis.empty(3), np.zeros(3))


def test_project_points_reconstruction(rng):
    d = 7
    X = rng.standard_normal((20, d))
    data = Dataset(X)
    basis = SubspaceBasis.empty(d)
    for _ in range(3):
        basis, _ = extend_basis(basis, rng.standard_normal(d))
    span = project_points(data, basis, "span-coordinates")
    comp = project_points(data, basis, "complement-ambient")
    assert span.points.shape == (20, 3)
    recon = basis.lift(span.points) + comp.points
    np.testing.assert_allclose(recon, X, atol=1e-10)
    # complement part is orthogonal to the basis
    assert np.max(np.abs(comp.points @ basis.vectors.T)) <= 1e-10


def test_project_points_rejects_empty_span_and_bad_mode(rng):
    data = Dataset(rng.standard_normal((4, 3)))
    with pytest.raises(ValueError):
        project_points(data, SubspaceBasis.empty(3), "span-coordinates")
    with pytest.raises(ValueError):
        project_points(data, SubspaceBasis.empty(3), "sideways")

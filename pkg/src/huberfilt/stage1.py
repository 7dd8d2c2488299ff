"""Outer spectral loop: filter spread spectra, set aside dominant directions.

Each iteration estimates the top eigenvalue of B_perp; small values certify
the weighted mean on the complement of V and terminate.  Otherwise an
alignment probe on images of (B_perp)^p decides between Case 1 (spectrum
spread across many directions: sketch and multi-directionally filter) and
Case 2 (few dominant directions: move the power-iteration witness into V).
The squared Frobenius norm of (B_perp)^p is tracked by Hutchinson probes as
the progress potential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from .data import Dataset, SubspaceBasis, as_weight_array
from .filtering import multidirectional_filter
from .linalg import (build_moment_state, estimate_alignment_probability,
                     estimate_top_eigenvalue, extend_basis, gaussian_sketch,
                     hutchinson_frobenius_sq, near_orthogonality_check,
                     power_apply)
from .params import AlgorithmParams

ALIGN_IMAGES_CAP = 32  # shared power images per alignment estimate
STALL_MASS = 1e-12     # a Case-1 filter removing less mass than this stalls


@dataclass
class IterationRecord:
    """Observability record for one outer-loop iteration."""

    t: int
    lambda_hat: float
    q_hat: float | None = None
    case: str = "terminate"  # terminate | filter | grow | fallback_grow
    phi_hat_before: float | None = None
    phi_hat_after: float | None = None
    mass_removed: float = 0.0
    dim_V: int = 0
    pairs_used: int | None = None
    m_perp_u_sq: float | None = None  # ||M_perp u||^2 for grow iterations

    def to_json_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class Stage1Output:
    """Final weights, set-aside subspace, full-space weighted mean, and trace."""

    basis: SubspaceBasis
    w: np.ndarray
    mu_full: np.ndarray
    trace: list = field(default_factory=list)
    terminated: bool = True
    filter_outcomes: list = field(default_factory=list)

    @property
    def dim_V(self) -> int:
        return self.basis.dim


def run_stage1(data: Dataset, eps: float, params: AlgorithmParams,
               rng: np.random.Generator, w0=None) -> Stage1Output:
    """Run the outer loop on (optionally warm-started) weights."""
    n, d = data.n, data.d
    w = np.ones(n) if w0 is None else as_weight_array(w0, n).copy()
    basis = SubspaceBasis.empty(d)
    k = params.k_sketch
    pairs = min(params.qt_pairs, ALIGN_IMAGES_CAP * (ALIGN_IMAGES_CAP - 1) // 2)
    q_threshold = 1.0 / (k**2 * params.t_max)
    trace: list[IterationRecord] = []
    outcomes = []
    terminated = False
    pending_phi: IterationRecord | None = None  # record waiting for phi_after
    state = None
    # fixed probe stream for every potential estimate in this run: common
    # random numbers correlate consecutive phi estimates, so a true decrease
    # of ||M_perp||_F^2 shows up as a decrease of the estimates w.h.p.
    probe_entropy = int(rng.integers(2**63))

    def estimate_phi(st):
        return hutchinson_frobenius_sq(st, params.p, params.hutchinson_probes,
                                       make_rng(probe_entropy, 0xF0B))

    for t in range(1, params.t_max + 1):
        state = build_moment_state(data, w, basis, eps, params.c1)
        if pending_phi is not None:
            phi = estimate_phi(state)
            pending_phi.phi_hat_after = phi
            pending_phi = None
        else:
            phi = None
        lam, witness = estimate_top_eigenvalue(state, params.p_prime, 1, rng)
        rec = IterationRecord(t=t, lambda_hat=float(lam), dim_V=basis.dim)
        if lam <= params.c_stop * eps:
            rec.case = "terminate"
            trace.append(rec)
            terminated = True
            break
        if phi is None:
            phi = estimate_phi(state)
        rec.phi_hat_before = phi
        q_hat = estimate_alignment_probability(state, params.p, k, pairs, rng)
        rec.q_hat = float(q_hat)
        rec.pairs_used = pairs
        grow_dir = None
        if q_hat <= q_threshold:
            U = gaussian_sketch(state, k, params.p, rng)
            if not near_orthogonality_check(U, k):
                rec.case = "fallback_grow"
                grow_dir = witness
            else:
                out = multidirectional_filter(data, w, eps, U, params)
                if out.mass_removed_total <= STALL_MASS * n:
                    # no point scored above threshold although the spectrum
                    # is large and spread: fall back to growing V so the
                    # iteration still makes one of the two proven kinds of
                    # progress.
                    rec.case = "fallback_grow"
                    grow_dir = witness
                else:
                    rec.case = "filter"
                    rec.mass_removed = out.mass_removed_total
                    outcomes.append(out)
                    w = out.w_after
        else:
            rec.case = "grow"
            grow_dir = witness
        if grow_dir is not None:
            mpu = power_apply(state, grow_dir, params.p)
            rec.m_perp_u_sq = float(mpu @ mpu)
            basis, appended = extend_basis(basis, grow_dir)
            if not appended:
                # witness numerically inside V: nothing left to set aside.
                trace.append(rec)
                break
        rec.dim_V = basis.dim
        trace.append(rec)
        pending_phi = rec
    if pending_phi is not None and state is not None:
        final_state = build_moment_state(data, w, basis, eps, params.c1)
        pending_phi.phi_hat_after = estimate_phi(final_state)
    sw = float(w.sum())
    mu_full = w @ data.points / sw
    return Stage1Output(basis=basis, w=w, mu_full=mu_full, trace=trace,
                        terminated=terminated, filter_outcomes=outcomes)

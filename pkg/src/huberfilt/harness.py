"""Benchmark runner and statistical audit suite.

bench_suite runs a grid of (estimator, dimension, eps, adversary, seed)
cells on shared synthetic instances and emits flat rows; the audit_*
functions verify, at desk scale, the statistical facts the estimators rely
on (certificate bound, filter mass accounting, goodness conditions, and the
regression conditional-moment claims).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from .data import Dataset, SubspaceBasis
from .datagen import ContaminationSpec, conditional_moments, gen_mean_instance
from .errors import HuberfiltError
from .estimator import robust_mean
from .filtering import warm_start
from .params import AlgorithmParams

BENCH_COLUMNS = ["estimator", "d", "n", "eps", "adversary", "seed", "l2_error",
                 "wall_ms", "dim_V", "inlier_mass_removed",
                 "outlier_mass_removed", "error"]
ALL_ESTIMATORS = ("robust_mean", "sample_mean", "coord_median", "single_direction")
THREADS_ENV = "HUBERFILT_THREADS"


@dataclass
class BenchConfig:
    """Grid description for the benchmark suite."""

    dims: list
    epsilons: list
    adversaries: list  # of ContaminationSpec
    seeds: list
    estimators: tuple = ALL_ESTIMATORS
    n_mult: float = 40.0          # n = ceil(n_mult * d / eps^2), capped
    n_cap: int = 400_000
    c: float = 0.5
    out_path: str | None = None
    format: str = "csv"
    measure_time: bool = True     # False zeroes wall_ms for byte-stable output
    param_overrides: dict = field(default_factory=dict)
    audit_certificates: bool = False  # attach audit_certificate to robust rows

    def __post_init__(self):
        for name in ("dims", "epsilons", "adversaries", "seeds", "estimators"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be nonempty")
        for est in self.estimators:
            if est not in ALL_ESTIMATORS:
                raise ValueError(f"unknown estimator: {est!r}")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")

    def n_for(self, d: int, eps: float) -> int:
        return min(math.ceil(self.n_mult * d / eps**2), self.n_cap)


def adversary_tag(spec: ContaminationSpec) -> str:
    tag = f"{spec.kind}:{spec.magnitude:g}"
    if spec.spread_count > 1:
        tag += f":{spec.spread_count}"
    return tag


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_cell(config: BenchConfig, estimator: str, d: int, eps: float,
              adv_index: int, spec: ContaminationSpec, seed: int) -> dict:
    n = config.n_for(d, eps)
    # the instance stream depends on everything except the estimator, so all
    # estimators in a cell see the same data.
    inst_rng = make_rng(seed, d, int(round(eps * 10**6)), adv_index)
    data = gen_mean_instance(d, n, eps, np.zeros(d), spec, inst_rng)
    est_rng = make_rng(seed, d, int(round(eps * 10**6)), adv_index,
                       1 + ALL_ESTIMATORS.index(estimator))
    row = {"estimator": estimator, "d": d, "n": n, "eps": eps,
           "adversary": adversary_tag(spec), "seed": seed, "l2_error": None,
           "wall_ms": 0.0, "dim_V": 0, "inlier_mass_removed": None,
           "outlier_mass_removed": None, "error": ""}
    t0 = time.perf_counter()
    try:
        if estimator == "sample_mean":
            mu_hat = data.points.mean(axis=0)
        elif estimator == "coord_median":
            mu_hat = np.median(data.points, axis=0)
        elif estimator == "single_direction":
            params = AlgorithmParams.for_instance(n, d, eps, c=config.c,
                                                  seed=seed,
                                                  **config.param_overrides)
            out = warm_start(data, eps, params, est_rng)
            w = out.w_after
            mu_hat = w @ data.points / w.sum()
            row["inlier_mass_removed"] = out.mass_removed_inlier
            row["outlier_mass_removed"] = out.mass_removed_outlier
        else:
            params = AlgorithmParams.for_instance(n, d, eps, c=config.c,
                                                  seed=seed,
                                                  **config.param_overrides)
            import warnings as _warnings
            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore")
                rep = robust_mean(data, eps, config.c, params, est_rng)
            mu_hat = rep.mu_hat
            row["dim_V"] = rep.dim_V
            row["inlier_mass_removed"] = rep.inlier_mass_removed
            row["outlier_mass_removed"] = rep.outlier_mass_removed
            if config.audit_certificates and rep.stage1_w is not None:
                main = data.subset(rep.main_indices)
                row["_certificate"] = audit_certificate(
                    main, rep.stage1_w, rep.stage1_basis, np.zeros(d), eps)
                row["_terminated"] = rep.terminated
            # drop the heavy per-point state before the row is retained
            rep.stage1_w = None
            rep.main_indices = None
            rep.filter_outcomes = [dataclasses.replace(o, w_after=None)
                                   for o in rep.filter_outcomes]
            row["_report"] = rep
            row["_labels_n_inlier"] = int(data.labels.sum())
        row["l2_error"] = float(np.linalg.norm(mu_hat))  # true mean is 0
    except HuberfiltError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    if config.measure_time:
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
    return row


def bench_suite(config: BenchConfig) -> list:
    """Run the grid; returns rows in deterministic order."""
    cells = [(est, d, eps, ai, spec, seed)
             for est in config.estimators
             for d in config.dims
             for eps in config.epsilons
             for ai, spec in enumerate(config.adversaries)
             for seed in config.seeds]
    workers = thread_count()
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda c: _run_cell(config, *c), cells))
    else:
        rows = [_run_cell(config, *cell) for cell in cells]
    return rows


def public_rows(rows: list) -> list:
    """Strip private diagnostic fields (leading underscore) from bench rows."""
    return [{k: v for k, v in row.items() if not k.startswith("_")}
            for row in rows]


def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))  # plain float repr even for numpy scalars
    return str(v)


def rows_to_csv(rows: list) -> str:
    """RFC-4180 CSV with the documented fixed header."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(BENCH_COLUMNS)
    for row in public_rows(rows):
        writer.writerow([_format_cell(row.get(col)) for col in BENCH_COLUMNS])
    return buf.getvalue()


def rows_to_json(rows: list) -> str:
    return json.dumps(public_rows(rows), sort_keys=True, indent=2) + "\n"


def write_rows(rows: list, path: str, fmt: str = "csv") -> None:
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

KAPPA_CERT = 10.0


def audit_certificate(data: Dataset, w, basis: SubspaceBasis, mu_true,
                      eps: float) -> dict:
    """Certificate bound: small top eigenvalue implies accurate weighted mean."""
    warr = np.asarray(getattr(w, "w", w), dtype=np.float64)
    sw = float(warr.sum())
    pts = basis.project_off(data.points)
    mu_w = warr @ pts / sw
    centered = pts - mu_w
    d = data.d
    if d <= 256:
        cov = (centered.T * warr) @ centered / sw
        lam = float(np.linalg.eigvalsh(cov)[-1]) - 1.0
    else:
        rng = make_rng(0, 0xCE27)
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        for _ in range(200):
            u = (centered.T @ (warr * (centered @ v))) / sw
            nu = float(np.linalg.norm(u))
            if nu == 0:
                break
            v = u / nu
        lam = float(v @ ((centered.T @ (warr * (centered @ v))) / sw)) - 1.0
    lhs = float(np.linalg.norm(mu_w - basis.project_off(np.asarray(mu_true, float))))
    bound = KAPPA_CERT * (eps + math.sqrt(max(lam, 0.0) * eps))
    return {"passed": bool(lhs <= bound), "lhs": lhs, "bound": bound, "lambda": lam}


def audit_filter_mass(outcomes: list, eps: float, n: int) -> dict:
    """Per-call mass accounting: inliers lose far less weight than outliers."""
    log_inv = math.log(1.0 / eps)
    calls = 0
    violations = 0
    details = []
    for out in outcomes:
        if out.mass_removed_inlier is None:
            continue
        calls += 1
        limit = max(2.0 * (eps / log_inv) * out.mass_removed_outlier, 1e-3 * n)
        ok = out.mass_removed_inlier <= limit
        violations += 0 if ok else 1
        details.append({"inlier": out.mass_removed_inlier,
                        "outlier": out.mass_removed_outlier,
                        "limit": limit, "passed": ok})
    rate = 1.0 if calls == 0 else 1.0 - violations / calls
    return {"calls": calls, "violations": violations, "pass_rate": rate,
            "details": details}


def audit_goodness(samples: Dataset, alpha: float, k: int, trials: int,
                   rng: np.random.Generator, kappa: float = 5.0) -> dict:
    """Spot-check the stability conditions the analysis needs from inliers."""
    X = samples.points
    n, d = X.shape
    mu = X.mean(axis=0)
    eps = alpha
    centered = X - mu
    # (1) directional medians are eps-accurate for most directions
    med_hits = 0
    mean_shifts = []
    cov_shifts = []
    m_del = max(1, int(math.floor(alpha * n)))
    for _ in range(trials):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        proj = centered @ v
        i = (n - 1) // 2
        med = float(np.partition(proj, i)[i])
        if abs(med) <= kappa * eps:
            med_hits += 1
        # (2.a)/(2.b) delete the alpha-fraction most extreme along v
        order = np.argsort(np.abs(proj), kind="stable")
        keep = order[:n - m_del]
        mu_del = X[keep].mean(axis=0)
        mean_shifts.append(float(np.linalg.norm(mu_del - mu)))
        var_v = float(proj @ proj / n)
        pk = proj[keep]
        var_del = float(pk @ pk / keep.shape[0])
        cov_shifts.append(abs(var_del - var_v))
    log_inv_a = math.log(1.0 / alpha)
    mean_bound = kappa * alpha * math.sqrt(log_inv_a)
    cov_bound = kappa * alpha * log_inv_a
    # (2.c) Hanson-Wright-type tail for a near-orthogonal k-row U
    Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    U = Q.T / math.sqrt(k)  # tr(U^T U) = 1
    p = np.sum((centered @ U.T) ** 2, axis=1)
    tail = float(np.mean(np.where(p > 100.0, p, 0.0)))
    tail_bound = kappa * eps / math.log(1.0 / eps)
    return {
        "median_pass_rate": med_hits / trials,
        "median_ok": med_hits / trials > 0.5,
        "mean_shift_max": max(mean_shifts),
        "mean_shift_bound": mean_bound,
        "mean_ok": max(mean_shifts) <= mean_bound,
        "cov_shift_max": max(cov_shifts),
        "cov_shift_bound": cov_bound,
        "cov_ok": max(cov_shifts) <= cov_bound,
        "tail_mass": tail,
        "tail_bound": tail_bound,
        "tail_ok": tail <= tail_bound,
    }


def audit_conditional(beta, sigma: float, a: float, half_length: float,
                      mc_samples: int, rng: np.random.Generator) -> dict:
    """Rejection-sample the regression model into the interval and compare
    empirical conditional moments with the analytic ones."""
    beta = np.asarray(beta, dtype=np.float64)
    d = beta.shape[0]
    sigma_y = math.sqrt(sigma**2 + float(beta @ beta))
    kept = []
    drawn = 0
    batch = max(10_000, mc_samples)
    while sum(b.shape[0] for b in kept) < mc_samples:
        X = rng.standard_normal((batch, d))
        y = X @ beta + sigma * rng.standard_normal(batch)
        mask = np.abs(y - a) <= half_length
        kept.append(X[mask])
        drawn += batch
    total_kept = sum(b.shape[0] for b in kept)
    X = np.vstack(kept)[:mc_samples]
    kept_frac = total_kept / drawn
    mean_emp = X.mean(axis=0)
    mean_th, enc = conditional_moments(beta, sigma, a, half_length)
    se_mean = math.sqrt(d / mc_samples)
    mean_dev = float(np.linalg.norm(mean_emp - mean_th))
    centered = X - mean_emp
    cov_emp = centered.T @ centered / X.shape[0]
    iso, along = enc
    b2 = float(beta @ beta)
    cov_th = iso * np.eye(d)
    if b2 > 0:
        cov_th += along * np.outer(beta, beta) / b2
    cov_dev = float(np.linalg.norm(cov_emp - cov_th, ord=2))
    se_cov = 3.0 * math.sqrt(d / mc_samples)
    ratio_bound = 0.2 * half_length / sigma_y
    return {
        "mean_dev": mean_dev,
        "mean_tol": 3.0 * se_mean,
        "mean_ok": mean_dev <= 3.0 * se_mean,
        "cov_dev": cov_dev,
        "cov_tol": se_cov,
        "cov_ok": cov_dev <= se_cov,
        "kept_fraction": kept_frac,
        "kept_fraction_bound": ratio_bound,
        "kept_ok": kept_frac >= ratio_bound,
        "mean_theory": [float(v) for v in mean_th],
        "mean_emp": [float(v) for v in mean_emp],
    }

"""Robust Gaussian mean estimation and robust linear regression under Huber
contamination, with matrix-free spectral filtering, a synthetic adversary
harness, and a statistical audit suite."""

from ._rng import make_rng
from .data import Dataset, SketchMatrix, SubspaceBasis, WeightVector
from .datagen import (ContaminationSpec, RegressionInstance,
                      conditional_moments, gen_mean_instance,
                      gen_regression_instance)
from .estimator import (MeanReport, RegressionReport,
                        baseline_center_regressor, robust_mean,
                        robust_regression, trimmed_mean)
from .filtering import FilterOutcome, downweight, multidirectional_filter, warm_start
from .harness import (BenchConfig, audit_certificate, audit_conditional,
                      audit_filter_mass, audit_goodness, bench_suite)
from .linalg import (MomentOperatorState, bperp_matvec, build_moment_state,
                     estimate_alignment_probability, estimate_top_eigenvalue,
                     extend_basis, gaussian_sketch, hutchinson_frobenius_sq,
                     near_orthogonality_check, power_apply, project_points)
from .lowdim import (CoverSet, brute_force_mean, directional_median,
                     feasible_point, naive_center, run_lowdim, sphere_cover,
                     topk_filter_loop)
from .params import AlgorithmParams
from .stage1 import IterationRecord, Stage1Output, run_stage1

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

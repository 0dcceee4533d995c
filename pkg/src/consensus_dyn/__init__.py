"""Interacting-particle consensus dynamics for optimization and sampling.

The package has three layers:

* primitives: weighted ensemble moments (`measures`), guarded symmetric
  linear algebra (`linalg`), objective functions with growth certificates
  (`objectives`);
* dynamics: the update steps and the time integrator (`dynamics`) plus
  trajectory diagnostics such as the weak-form residual and empirical
  transport distances (`diagnostics`);
* harness: randomized inequality check families (`verify`) and the
  experiment command line (`cli`, console script `consensus-dyn`).
"""

from .diagnostics import (BumpTestFunction, FPResidualReport,
                          MomentBoundReport, StabilityReport, StabilityRow,
                          W2_MAX_SIZE, fp_residual, fp_residual_scaling,
                          make_bump, moment_bound_monitor, raw_moment,
                          residual_report_from_samples, stability_ratios,
                          wasserstein2)
from .dynamics import (DynamicsConfig, ExplicitInit, GaussianInit, InitialLaw,
                       MAX_DT, MAX_PARTICLE_NORM, TrajectoryRecord, UniformBoxInit,
                       cbo_step, cbs_step, derive_seed,
                       gaussian_stationary_reference, integrate,
                       sample_initial, step_noise)
from .errors import (BlowUpError, ConfigError, NonFiniteCostError, NotPSDError,
                     UnsupportedObjectiveError, UnverifiedCertificateError)
from .linalg import (CheckReport, PSD_TOL, matrix_norms, powers_stormer_check,
                     psd_project, spd_sqrt, sqrt_perturbation_check, symmetrize)
from .measures import (BoundCheckReport, BoundConstants, Ensemble,
                       WeightedMoments, bound_constants, check_moment_bounds,
                       ess, gibbs_weights, reweighted_second_moment,
                       weighted_covariance, weighted_mean, weighted_moments)
from .objectives import (AssumptionReport, BUILTIN_OBJECTIVES, GrowthCertificate,
                         Objective, PAIR_NORM_FLOOR, blackbox_objective,
                         builtin_objective, default_pair_sampler, eval_batch,
                         eval_objective, make_quadratic, make_rastrigin,
                         verify_assumptions)
from .verify import FAMILIES, FamilyResult, pushforward_objective, run_families

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport", "BUILTIN_OBJECTIVES", "BlowUpError",
    "BoundCheckReport", "BoundConstants", "BumpTestFunction", "CheckReport",
    "ConfigError", "DynamicsConfig", "Ensemble", "ExplicitInit", "FAMILIES",
    "FPResidualReport", "FamilyResult", "GaussianInit", "GrowthCertificate",
    "InitialLaw", "MAX_DT", "MAX_PARTICLE_NORM", "MomentBoundReport",
    "NonFiniteCostError", "NotPSDError", "Objective", "PAIR_NORM_FLOOR",
    "PSD_TOL", "StabilityReport", "StabilityRow", "TrajectoryRecord",
    "UniformBoxInit", "UnsupportedObjectiveError", "UnverifiedCertificateError",
    "W2_MAX_SIZE", "WeightedMoments", "__version__", "blackbox_objective",
    "bound_constants", "builtin_objective", "cbo_step", "cbs_step",
    "check_moment_bounds", "default_pair_sampler", "derive_seed", "ess",
    "eval_batch", "eval_objective", "fp_residual", "fp_residual_scaling",
    "gaussian_stationary_reference", "gibbs_weights", "integrate",
    "make_bump", "make_quadratic", "make_rastrigin", "matrix_norms",
    "moment_bound_monitor", "powers_stormer_check", "psd_project",
    "pushforward_objective", "raw_moment", "residual_report_from_samples",
    "reweighted_second_moment", "run_families", "sample_initial",
    "spd_sqrt", "sqrt_perturbation_check", "stability_ratios", "step_noise",
    "symmetrize", "verify_assumptions", "wasserstein2", "weighted_covariance",
    "weighted_mean", "weighted_moments",
]

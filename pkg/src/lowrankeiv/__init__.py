# Low-rank multi-response regression with corrupted covariates: surrogate
# construction, the constrained proximal gradient solver, theory
# diagnostics, and a seeded simulation harness.

from .datagen import (
    CorruptionSpec,
    GroundTruth,
    ProblemInstance,
    apply_additive,
    apply_missing,
    gen_dataset,
    gen_ground_truth_exact,
    gen_ground_truth_lq,
    lq_ball_membership,
    mix64,
)
from .kernels import (
    SvdFactors,
    matrix_norm,
    project_nuclear_ball,
    project_subspace_A,
    project_subspace_B,
    singular_value_soft_threshold,
    svd,
    trace_inner,
)
from .solver import (
    SolverConfig,
    SolverDivergenceError,
    SolverResult,
    SolverTrace,
    loss_gradient,
    objective,
    prox_step,
    relative_error,
    solve,
)
from .surrogate import (
    SurrogatePair,
    build_additive,
    build_clean,
    build_for_instance,
    build_missing,
    estimate_sigma_w,
    min_eigenvalue,
)

__all__ = [
    "CorruptionSpec",
    "GroundTruth",
    "ProblemInstance",
    "SolverConfig",
    "SolverDivergenceError",
    "SolverResult",
    "SolverTrace",
    "SurrogatePair",
    "SvdFactors",
    "apply_additive",
    "apply_missing",
    "build_additive",
    "build_clean",
    "build_for_instance",
    "build_missing",
    "estimate_sigma_w",
    "gen_dataset",
    "gen_ground_truth_exact",
    "gen_ground_truth_lq",
    "loss_gradient",
    "lq_ball_membership",
    "matrix_norm",
    "min_eigenvalue",
    "mix64",
    "objective",
    "project_nuclear_ball",
    "project_subspace_A",
    "project_subspace_B",
    "prox_step",
    "relative_error",
    "singular_value_soft_threshold",
    "solve",
    "svd",
    "trace_inner",
]

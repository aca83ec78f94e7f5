"""Patchy vector fields with Caratheodory, impulsive and sample-and-hold integrators."""

from __future__ import annotations

from .analyze import (
    check_index_monotone,
    check_prop22_budget,
    convergence_study,
    distance_to_solution_set,
    invariance_checks,
    monotone_modification,
    monotone_partition,
    robustness_run,
    sampling_robustness_run,
)
from .bvsignal import BVSignal, Piece, PiecewiseSignal, SamplingPlan, build_equivalent_w, \
    compose_inner_outer, from_sampling_errors
from .errors import (
    BranchOverflow,
    DegenerateBoundary,
    DomainValidationError,
    EventOverflow,
    Inconclusive,
    NonInwardCollar,
    NumericalFailure,
    OutsideDomain,
    PartitionMismatch,
    PatchyError,
    ScenarioError,
)
from .geometry import Ball, Ellipsoid, HalfSpace, SmoothDomain, ball, ellipsoid, smooth_intersection
from .integrate import (
    IntegratorConfig,
    Trajectory,
    enumerate_solutions,
    solve_caratheodory,
    solve_impulsive,
    solve_perturbed_feedback,
    solve_sampling,
)
from .patchfield import (
    ControlDynamics,
    Patch,
    PatchyFeedback,
    PatchyField,
    RobustnessConstants,
    affine_dynamics,
    closed_loop,
    estimate_constants,
    spiral_feedback,
)
from .scenario import load_scenario

__version__ = "0.1.0"

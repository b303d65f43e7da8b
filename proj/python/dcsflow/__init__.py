"""Dynamic compressed sensing of unsteady flow fields.

Thin wrapper over the C++ core: double-gyre snapshot generation, POD bases,
sparse waypoint selection, and trajectory optimization.
"""

from dcsflow._core import (
    CostBreakdown,
    DoubleGyreParams,
    GridSpec,
    NumericalError,
    PodBasis,
    SnapshotMatrix,
    SparseSolution,
    TimeGrid,
    Trajectory,
    ValidationError,
    WaypointSet,
    build_snapshot_matrix,
    mode_values_at,
    plan_trajectory,
    pod_covariance,
    pod_svd,
    random_measurement_matrix,
    run_pipeline,
    score_waypoint_set,
    select_waypoints,
    solve_basis_pursuit,
    stream_function,
    temporal_coefficients,
    velocity,
)

__all__ = [
    "CostBreakdown",
    "DoubleGyreParams",
    "GridSpec",
    "NumericalError",
    "PodBasis",
    "SnapshotMatrix",
    "SparseSolution",
    "TimeGrid",
    "Trajectory",
    "ValidationError",
    "WaypointSet",
    "build_snapshot_matrix",
    "mode_values_at",
    "plan_trajectory",
    "pod_covariance",
    "pod_svd",
    "random_measurement_matrix",
    "run_pipeline",
    "score_waypoint_set",
    "select_waypoints",
    "solve_basis_pursuit",
    "stream_function",
    "temporal_coefficients",
    "velocity",
]

"""Numerical laboratory for centro-affine normal flows of convex bodies."""

from .affine import (
    AffineFrame,
    PinchingSpec,
    banach_mazur_upper,
    mahler_pinched,
    max_admissible_epsilon,
    mvee,
    normalize_special_linear,
    pinching_delta,
)
from .body import Body, ConvexityError, CurvatureSummary, mahler_volume, unit_ball_volume
from .flow import (
    FlowParams,
    FlowState,
    FlowStepError,
    TerminalEstimate,
    ball_extinction_time,
    cfl_timestep,
    contraction_speed,
    displacement_monitor,
    expansion_speed,
    extinction_bracket,
    harnack_monitor,
    rescale_to_unit,
    run_to_time,
    shrinking_ball_radius,
    step,
)
from .invariants import (
    InvariantRecord,
    MonotonicityReport,
    audit_monotone,
    isoperimetric_ceiling,
    isoperimetric_ratio,
    mahler_ceiling,
    make_record,
    p_affine_surface_area,
)
from .runner import RunConfig, RunResult, SeedSpec, run
from .snapshots import load_body, save_body
from .sphere import CircleGrid, LatLonGrid, SphereGrid, build_grid

__version__ = "0.1.0"

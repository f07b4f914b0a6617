"""Stochastic MPC with ellipsoidal tube tightening and measured-state
constraint relaxation, plus a seeded Monte-Carlo validation harness."""

from .controllers import (
    ControllerStep,
    IsControllerState,
    build_backup,
    build_basic,
    build_is,
    build_ms,
    shift_plan,
    step_backup,
    step_is,
    step_ms,
)
from .design import (
    DesignParams,
    Ellipsoid,
    Polytope,
    ValidationReport,
    build_design,
    max_inscribed_radius,
    max_volume_input_shape,
    radius_from_violation,
    rho_floor,
    scale_input_shape,
    terminal_weight,
)
from .simulate import (
    ComparisonResult,
    McSummary,
    TrajectoryRecord,
    compare_ms_is,
    gaussian_noise,
    monte_carlo,
    rollout,
)
from .socp import ConicProgram, ConicSolution, SocBlock, feasibility_probe, solve
from .tubes import (
    ErrorCovariance,
    PosteriorBounds,
    TightenedTube,
    build_tube,
    covariance_recursion,
    posterior_bounds,
    prs_radius,
    terminal_invariance_check,
    violation_fn,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

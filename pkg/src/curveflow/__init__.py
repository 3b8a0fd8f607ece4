"""Structure-preserving solvers for constrained gradient flows of closed
planar curves (Willmore, area-preserving Willmore, Helfrich) on periodic
B-spline spaces."""

from .config import RunConfig, parse_config
from .errors import (
    ConfigError,
    LinearDependenceError,
    NonConvergenceError,
    RegularityError,
    SingularJacobianError,
    StructureViolationError,
)
from .geometry import area, bending, elastic_energy, jets, length
from .gradients import (
    GramData,
    dissipation_rate,
    gram,
    pair_jets,
    rhs_area,
    rhs_bending,
    rhs_elastic,
    rhs_length,
    solve_gradient,
)
from .presets import PRESETS, get_preset
from .schemes import (
    FlowProblem,
    StepRecord,
    StepUnknowns,
    residual_scheme1,
    residual_scheme2,
    step_energy_report,
)
from .splines import (
    ControlCurve,
    ScalarField,
    SplineSpace,
    assemble_weighted_mass,
    basis_eval,
    build_space,
    curve_eval,
    l2_project,
)
from .stepper import (
    NewtonConfig,
    RunState,
    TimeController,
    dt_first,
    dt_next,
    initial_guess,
    newton_solve,
    run_flow,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ControlCurve",
    "FlowProblem",
    "GramData",
    "LinearDependenceError",
    "NewtonConfig",
    "NonConvergenceError",
    "PRESETS",
    "RegularityError",
    "RunConfig",
    "RunState",
    "ScalarField",
    "SingularJacobianError",
    "SplineSpace",
    "StepRecord",
    "StepUnknowns",
    "StructureViolationError",
    "TimeController",
    "area",
    "assemble_weighted_mass",
    "basis_eval",
    "bending",
    "build_space",
    "curve_eval",
    "dissipation_rate",
    "dt_first",
    "dt_next",
    "elastic_energy",
    "get_preset",
    "gram",
    "initial_guess",
    "jets",
    "l2_project",
    "length",
    "newton_solve",
    "pair_jets",
    "parse_config",
    "residual_scheme1",
    "residual_scheme2",
    "rhs_area",
    "rhs_bending",
    "rhs_elastic",
    "rhs_length",
    "run_flow",
    "solve_gradient",
    "step_energy_report",
]

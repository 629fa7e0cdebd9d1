"""Model reduction for oscillator power-grid models.

The pipeline: describe a grid (:mod:`gridmor.netparams`), lift its swing
dynamics to an exactly quadratic system (:mod:`gridmor.lift`), shift to a
zero initial condition, approximate the Gramians by a truncated low-rank
series (:mod:`gridmor.gramians`), reduce by balanced truncation or POD
(:mod:`gridmor.reduction`), and simulate / quantify the reduction error
(:mod:`gridmor.sim`).  The ``gridmor`` console script drives the same
steps from the command line.
"""

from .errors import (
    ConvergenceError,
    FactorizationError,
    GridmorError,
    ParameterFileError,
    RankError,
    SimulationFailure,
    StabilityError,
    ValidationError,
)
from .gramians import GramianConfig, GramianPair, approx_gramians
from .lift import (
    DenseHessian,
    LiftedHessian,
    LiftedState,
    QuadraticSystem,
    build_quadratic,
    kron_factor_product,
    lift_state,
    mode_k_fold,
    mode_k_unfold,
    project_hessian,
    quadratic_rhs,
    shift_system,
)
from .lyap import (
    MACHINE_TAU,
    LowRankFactor,
    cholesky_factor,
    nearest_spd,
    solve_lyapunov_lr,
    truncate_lr,
)
from .netparams import NetworkParameters, load_parameters, save_parameters, synth_grid
from .reduction import (
    BalancedTruncationReducer,
    PODReducer,
    ProjectionPair,
    ReducedQuadraticModel,
    assemble_reduced,
    bt_projections,
    load_reduced_model,
    pod_reduce,
    reduced_rhs,
    save_reduced_model,
    simulate_reduced,
    steady_state_adjust,
)
from .sim import (
    ErrorReport,
    PiecewiseConstantInput,
    Trajectory,
    compare,
    integrate,
    pti_error,
    simulate_quadratic,
    simulate_swing,
    write_trajectory_csv,
)
from .swing import SwingState, coupling_term, swing_ode, swing_rhs

__version__ = "0.1.0"

__all__ = [
    "BalancedTruncationReducer",
    "ConvergenceError",
    "DenseHessian",
    "ErrorReport",
    "FactorizationError",
    "GramianConfig",
    "GramianPair",
    "GridmorError",
    "LiftedHessian",
    "LiftedState",
    "LowRankFactor",
    "MACHINE_TAU",
    "NetworkParameters",
    "ParameterFileError",
    "PiecewiseConstantInput",
    "PODReducer",
    "ProjectionPair",
    "QuadraticSystem",
    "RankError",
    "ReducedQuadraticModel",
    "SimulationFailure",
    "StabilityError",
    "SwingState",
    "Trajectory",
    "ValidationError",
    "approx_gramians",
    "assemble_reduced",
    "bt_projections",
    "build_quadratic",
    "cholesky_factor",
    "compare",
    "coupling_term",
    "integrate",
    "kron_factor_product",
    "lift_state",
    "load_parameters",
    "load_reduced_model",
    "mode_k_fold",
    "mode_k_unfold",
    "nearest_spd",
    "pod_reduce",
    "project_hessian",
    "pti_error",
    "quadratic_rhs",
    "reduced_rhs",
    "save_parameters",
    "save_reduced_model",
    "shift_system",
    "simulate_quadratic",
    "simulate_reduced",
    "simulate_swing",
    "solve_lyapunov_lr",
    "steady_state_adjust",
    "swing_ode",
    "swing_rhs",
    "synth_grid",
    "truncate_lr",
    "write_trajectory_csv",
]

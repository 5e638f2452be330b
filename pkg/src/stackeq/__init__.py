"""Equilibrium solver for single-leader, many-follower pricing games.

The leader's decision feeds N followers who settle into a variational
equilibrium over jointly constrained strategies; the toolkit lifts that
equilibrium into a single follower's KKT system, differentiates it
implicitly, and ascends the leader's objective by projected gradient
steps. Ships a proximal best-response baseline and two EV benchmark
problems.
"""

from .errors import (ConvergenceError, GameConfigError, InfeasiblePointError,
                     InfeasibleSetError, InstanceFormatError, KKTError,
                     ProjectionError, UnboundedProblemError,
                     UnsupportedInstanceError)
from .game import (Constraint, DeviationSampling, FollowerObjective,
                   FollowerProfile, GameSpec, GradientField,
                   LeaderConstraint, assemble_gradient_field, block_slices,
                   check_follower_feasible, follower_slice, joint_polytope,
                   leader_polytope, lipschitz_estimate, residual_gne,
                   residual_ve)
from .implicit import (ActiveSystem, build_active_system, implicit_gradient,
                       implicit_gradient_vi, leader_total_gradient)
from .lifted import (ActiveSet, LiftedLayout, LiftedPoint, detect_active_set,
                     from_w, kkt_residuals, layout_of, recover_multipliers)
from .pigd import (PIGDConfig, SolveTrace, TraceRecord, default_leader_start,
                   solve_pigd, warm_start_chain)
from .polytopes import (ConvexPolytope, linear_minimize, project, restrict,
                        vertices)
from .proximal import ProximalConfig, solve_proximal
from .ve import VEConfig, VEResult, recover_z, solve_ve

__version__ = "0.1.0"

__all__ = [
    "ActiveSet", "ActiveSystem", "Constraint", "ConvergenceError",
    "ConvexPolytope", "DeviationSampling", "FollowerObjective",
    "FollowerProfile", "GameConfigError", "GameSpec", "GradientField",
    "InfeasiblePointError", "InfeasibleSetError", "InstanceFormatError",
    "KKTError", "LeaderConstraint", "LiftedLayout", "LiftedPoint",
    "PIGDConfig", "ProjectionError", "ProximalConfig", "SolveTrace",
    "TraceRecord", "UnboundedProblemError", "UnsupportedInstanceError",
    "VEConfig", "VEResult", "assemble_gradient_field", "block_slices",
    "build_active_system", "check_follower_feasible", "default_leader_start",
    "detect_active_set", "follower_slice", "from_w", "implicit_gradient",
    "implicit_gradient_vi", "joint_polytope", "kkt_residuals", "layout_of",
    "leader_polytope", "leader_total_gradient", "linear_minimize",
    "lipschitz_estimate", "project", "recover_multipliers", "recover_z",
    "residual_gne", "residual_ve", "restrict", "solve_pigd",
    "solve_proximal", "solve_ve", "vertices", "warm_start_chain",
]

"""Global-optimization toolkit for en-route aircraft conflict resolution.

Detects pairwise conflicts from uniform-motion geometry, classifies which
pairs are resolvable by speed and heading control, and solves the resulting
disjunctive programs to guaranteed optimality with an in-package convex-QP
branch-and-bound and constraint generation.  Flight-level changes are
handled lexicographically on top.  Includes benchmark generators, a CLI and
an SVG renderer.
"""

from .api import preprocess, solve_2d, solve_2dfl
from .fl import FlAssignment, FlSolution, NonSeparableFamily, solve_fl_assignment
from .geometry import (
    AircraftState,
    ControlBounds,
    InitialLossOfSeparation,
    PairClass,
    PairGeometry,
    VelocityBox,
    classify_pair,
    closest_approach_margin,
    is_conflict,
    min_horizontal_distance,
    partition_pairs,
    relative_state,
    time_of_closest_approach,
    velocity_box,
)
from .instances import Instance, assign_fls, gen_cp, gen_fp, gen_gp, gen_rcp, generate
from .model import (
    MixedIntegerModel,
    build_2d_disjunctive,
    build_2d_shadow,
    build_fl_model,
    lint_model,
    lp_dump,
    recover_controls,
)
from .qp import QpInfeasible, QpProblem, solve_qp
from .branch_bound import BnBParams, branch_and_bound
from .solve2d import (
    PiecewisePartition,
    SolveOutcome,
    SolverParams,
    check_speed_violations,
    refine_partition,
)

__version__ = "0.1.0"

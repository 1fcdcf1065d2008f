"""Instance-level entry points tying generators to the solvers."""

from __future__ import annotations

from .fl import FlSolution, solve_2dfl as _solve_2dfl
from .geometry import PairPartition, partition_pairs
from .instances import Instance
from .solve2d import SolveOutcome, SolverParams, solve_2d_core


def preprocess(inst: Instance) -> PairPartition:
    """Classify every aircraft pair of an instance."""
    return partition_pairs(list(inst.aircraft), inst.d, inst.bounds)


def solve_2d(inst: Instance, params: SolverParams | None = None) -> SolveOutcome:
    """Velocity-only resolution of an instance."""
    return solve_2d_core(list(inst.aircraft), inst.d, inst.bounds, params)


def solve_2dfl(inst: Instance, params: SolverParams | None = None) -> FlSolution:
    """Lexicographic level-change-then-velocity resolution of an instance."""
    return _solve_2dfl(list(inst.aircraft), inst.d, inst.bounds, params)

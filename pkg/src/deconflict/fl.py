"""Lexicographic flight-level assignment over two-dimensional resolution.

Level changes outrank velocity deviations, so the solve is decomposed: a
small integer program first minimises the total level deviation subject to
known non-separable aircraft subsets never sharing a level, then each level
is handed to the two-dimensional solver.  A level whose subproblem turns out
infeasible contributes its aircraft set as a new forbidden subset and the
assignment is repeated; every round either finishes or strictly grows the
forbidden family, which is finite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .branch_bound import BnBParams, branch_and_bound
from .geometry import AircraftState, PairPartition, partition_pairs
from .model import BINARY, CONTINUOUS, LinearConstraint, MixedIntegerModel
from .solve2d import SolveOutcome, SolverParams, solve_2d_core


class FlInfeasible(RuntimeError):
    """Some forbidden subset cannot be split across the available levels."""


@dataclass(frozen=True)
class FlAssignment:
    levels: tuple[int, ...]

    def deviation(self, aircraft: list[AircraftState]) -> int:
        """Total level deviation from the base assignment."""
        return sum(abs(lvl - a.fl) for lvl, a in zip(self.levels, aircraft))


@dataclass
class NonSeparableFamily:
    """Aircraft subsets known to be jointly unresolvable in two dimensions."""

    subsets: list[frozenset[int]] = field(default_factory=list)

    def add(self, subset) -> bool:
        s = frozenset(subset)
        if len(s) < 2 or s in self.subsets:
            return False
        self.subsets.append(s)
        return True

    def violated_by(self, levels, aircraft) -> bool:
        for s in self.subsets:
            members = sorted(s)
            common = frozenset.intersection(*(aircraft[i].fl_set for i in members))
            for k in common:
                if all(levels[i] == k for i in members):
                    return True
        return False


def build_assignment_model(aircraft: list[AircraftState], family: NonSeparableFamily,
                           pins: dict[int, int] | None = None) -> MixedIntegerModel:
    """Pure integer-linear level assignment model.

    One selector binary per reachable level, a linearised absolute deviation
    per aircraft, and one packing row per forbidden subset and shared level.
    ``pins`` forces listed aircraft onto given levels.
    """
    m = MixedIntegerModel(tag="FLAssign")
    pins = pins or {}
    max_span = max((max(a.fl_set) - min(a.fl_set)) for a in aircraft)
    for i, a in enumerate(aircraft):
        rhos = {}
        for k in sorted(a.fl_set):
            lo_pin = 1.0 if pins.get(i) == k else 0.0
            hi_pin = 0.0 if i in pins and pins[i] != k else 1.0
            idx = m.add_var(BINARY, 0, 1, ("rho", i, k))
            if lo_pin > 0.5 or hi_pin < 0.5:
                m.linear.append(LinearConstraint({idx: 1.0}, "==", lo_pin, f"pin[{i},{k}]"))
            rhos[k] = idx
        m.linear.append(LinearConstraint({r: 1.0 for r in rhos.values()}, "==", 1.0, f"fl_assign[{i}]"))
        dev = m.add_var(CONTINUOUS, 0.0, float(max_span), ("drho", i))
        up = {r: float(k) for k, r in rhos.items()}
        up[dev] = -1.0
        m.linear.append(LinearConstraint(up, "<=", float(a.fl), f"fl_dev_up[{i}]"))
        dn = {r: -float(k) for k, r in rhos.items()}
        dn[dev] = -1.0
        m.linear.append(LinearConstraint(dn, "<=", -float(a.fl), f"fl_dev_dn[{i}]"))
        m.objective_lin[dev] = 1.0
    for s_idx, subset in enumerate(family.subsets):
        members = sorted(subset)
        common = frozenset.intersection(*(aircraft[i].fl_set for i in members))
        for k in sorted(common):
            coeffs = {m.by_meaning("rho", i, k).idx: 1.0 for i in members}
            m.linear.append(
                LinearConstraint(coeffs, "<=", float(len(members) - 1), f"fl_sep[{s_idx},{k}]")
            )
    return m


def _levels_from(model: MixedIntegerModel, x, n: int) -> tuple[int, ...]:
    levels = []
    for i in range(n):
        chosen = None
        for v in model.vars:
            if v.meaning[0] == "rho" and v.meaning[1] == i and round(x[v.idx]) == 1:
                chosen = v.meaning[2]
                break
        levels.append(chosen)
    return tuple(levels)


def solve_fl_assignment(aircraft: list[AircraftState], family: NonSeparableFamily,
                        time_limit: float = 600.0) -> FlAssignment:
    """Minimum-total-deviation level assignment honouring the family.

    Keeping every aircraft at its base level is optimal whenever it violates
    no forbidden subset.  Otherwise a small integer program is solved and the
    optimum is canonicalised to the lexicographically smallest level vector
    among minimisers, so ties resolve identically everywhere.
    """
    if any(a.fl is None or a.fl_set is None for a in aircraft):
        raise FlInfeasible("aircraft lack flight-level data")
    base = tuple(a.fl for a in aircraft)
    if not family.violated_by(base, aircraft):
        return FlAssignment(base)

    def solve(pins):
        model = build_assignment_model(aircraft, family, pins)
        res = branch_and_bound(model, BnBParams(eps=1e-9, time_limit=time_limit))
        if res.status == "infeasible":
            return None
        if res.x is None:
            raise FlInfeasible("assignment solve hit the time limit")
        return res.ub, _levels_from(model, res.x, len(aircraft))

    first = solve({})
    if first is None:
        raise FlInfeasible("no level assignment can split the non-separable subsets")
    best_obj, levels = first
    budget = best_obj + 0.25

    pins: dict[int, int] = {}
    current = list(levels)
    for i, a in enumerate(aircraft):
        for k in sorted(a.fl_set):
            if k == current[i]:
                pins[i] = k
                break
            trial = current.copy()
            trial[i] = k
            dev = sum(abs(l - s.fl) for l, s in zip(trial, aircraft))
            if dev <= budget and not family.violated_by(trial, aircraft):
                pins[i] = k
                current = trial
                break
            sub = solve({**pins, i: k})
            if sub is not None and sub[0] <= budget:
                pins[i] = k
                current = list(sub[1])
                break
        else:
            pins[i] = current[i]
    return FlAssignment(tuple(current))


@dataclass
class FlSolution:
    status: str                           # optimal | infeasible | timeout
    assignment: FlAssignment | None
    per_level: dict[int, SolveOutcome]
    fl_deviation: int
    total_2d_deviation: float
    controls: list[tuple[float, float]] | None
    iterations: int
    wall_time: float
    family: NonSeparableFamily = field(default_factory=NonSeparableFamily)

    @property
    def objective_pair(self) -> tuple[int, float]:
        return (self.fl_deviation, self.total_2d_deviation)


def solve_2dfl(aircraft: list[AircraftState], d: float, bounds,
               params: SolverParams | None = None, max_rounds: int = 50) -> FlSolution:
    """Assignment / per-level decomposition with lazily generated subsets.

    The forbidden family starts from pairwise non-separable pairs that could
    share a level; each round assigns levels, solves every level in isolation
    (the per-solve time limit applies level by level), and turns any
    infeasible level into new family members.  A per-level timeout aborts the
    whole solve rather than risking an uncertified cut.
    """
    params = params or SolverParams()
    start = time.perf_counter()
    if any(a.fl is None or a.fl_set is None for a in aircraft):
        raise FlInfeasible("aircraft lack flight-level data")
    part = partition_pairs(aircraft, d, bounds)
    family = NonSeparableFamily()
    for (i, j) in sorted(part.non_separable):
        if aircraft[i].fl_set & aircraft[j].fl_set:
            family.add((i, j))

    cbs = bounds if isinstance(bounds, list) else [bounds] * len(aircraft)
    all_levels = sorted({k for a in aircraft for k in a.fl_set})

    def finish(status, assignment, per_level, iterations):
        controls = None
        total = math.inf
        if status == "optimal":
            controls = [(1.0, 0.0)] * len(aircraft)
            for k, out in per_level.items():
                members = [i for i, lvl in enumerate(assignment.levels) if lvl == k]
                if out.controls is not None:
                    for pos, i in enumerate(members):
                        controls[i] = out.controls[pos]
            total = sum(out.ub for out in per_level.values() if math.isfinite(out.ub))
        return FlSolution(
            status=status,
            assignment=assignment,
            per_level=per_level,
            fl_deviation=assignment.deviation(aircraft) if assignment else -1,
            total_2d_deviation=total,
            controls=controls,
            iterations=iterations,
            wall_time=time.perf_counter() - start,
            family=family,
        )

    assignment = None
    per_level: dict[int, SolveOutcome] = {}
    for round_no in range(1, max_rounds + 1):
        try:
            assignment = solve_fl_assignment(aircraft, family)
        except FlInfeasible:
            return finish("infeasible", None, per_level, round_no)
        per_level = {}
        grew = False
        for k in all_levels:
            members = [i for i, lvl in enumerate(assignment.levels) if lvl == k]
            if len(members) <= 1:
                per_level[k] = SolveOutcome(
                    status="optimal", lb=0.0, ub=0.0, gap=0.0,
                    controls=[(1.0, 0.0)] * len(members), z={}, n_outer=0, wall_time=0.0,
                )
                continue
            sub_aircraft = [aircraft[i] for i in members]
            sub_bounds = [cbs[i] for i in members]
            out = solve_2d_core(sub_aircraft, d, sub_bounds, params)
            per_level[k] = out
            if out.status == "infeasible":
                if out.infeasible_pairs:
                    for (a, b) in out.infeasible_pairs:
                        family.add((members[a], members[b]))
                else:
                    family.add(members)
                grew = True
            elif out.status == "timeout":
                return finish("timeout", assignment, per_level, round_no)
        if not grew:
            return finish("optimal", assignment, per_level, round_no)
    return finish("timeout", assignment, per_level, max_rounds)

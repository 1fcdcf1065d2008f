"""Constraint-generation loop for the two-dimensional resolution problem.

The speed-rate magnitude constraint is the only nonconvex piece of the
problem, so the driver first solves the relaxation that drops it entirely.
If the optimum already has admissible speeds it is globally optimal.
Otherwise the relaxation is tightened per offending aircraft: the convex
upper ring enters as a quadratic row, and the lower ring is outer
approximated through auxiliary squared-component variables capped by an
upper envelope of chords that is refined where violations appear, with one
selector binary per chord segment.  A projection heuristic with fixed branch
binaries supplies genuinely feasible upper bounds between rounds.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .branch_bound import BnBParams, Compiled, branch_and_bound, compile_model
from .geometry import (
    AircraftState,
    ControlBounds,
    PairPartition,
    is_conflict,
    partition_pairs,
    relative_velocity,
)
from .model import (
    BINARY,
    CONTINUOUS,
    LinearConstraint,
    MixedIntegerModel,
    QuadConstraint,
    recover_controls,
)
from .qp import QpInfeasible, QpProblem, solve_qp

log = logging.getLogger(__name__)

SPEED_TOL = 1e-6
UPPER = "upper"
LOWER = "lower"


@dataclass(frozen=True)
class SpeedViolation:
    aircraft: int
    kind: str              # UPPER or LOWER
    delta_x: float
    delta_y: float

    @property
    def q(self) -> float:
        return math.hypot(self.delta_x, self.delta_y)


@dataclass(frozen=True)
class PiecewisePartition:
    """Ordered breakpoints of one squared-control upper envelope.

    Each segment [b_k, b_k+1] carries the chord of the parabola through its
    endpoints: slope b_k + b_k+1, intercept -b_k * b_k+1.  Chords touch the
    parabola exactly at the knots and dominate it in between.
    """

    breakpoints: tuple[float, ...]

    def __post_init__(self):
        if len(self.breakpoints) < 2 or any(
            b2 - b1 <= 0 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])
        ):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def lo(self) -> float:
        return self.breakpoints[0]

    @property
    def hi(self) -> float:
        return self.breakpoints[-1]

    def segments(self) -> list[tuple[float, float]]:
        return list(zip(self.breakpoints, self.breakpoints[1:]))

    def chords(self) -> list[tuple[float, float]]:
        return [(a + b, -a * b) for a, b in self.segments()]

    def envelope(self, value: float) -> float:
        """Upper envelope (selected chord) at a point inside the domain."""
        for (a, b), (alpha, beta) in zip(self.segments(), self.chords()):
            if a - 1e-12 <= value <= b + 1e-12:
                return alpha * value + beta
        raise ValueError(f"{value} outside partition domain [{self.lo}, {self.hi}]")


def initial_partition(lo: float, hi: float) -> PiecewisePartition:
    return PiecewisePartition((lo, hi))


def refine_partition(pp: PiecewisePartition, at: float) -> PiecewisePartition:
    """Split the segment containing ``at`` so chords meet the parabola there.

    Splitting at an existing knot would create an empty segment; that call is
    a no-op with a log notice.
    """
    if not pp.lo < at < pp.hi:
        raise ValueError(f"split point {at} not strictly inside [{pp.lo}, {pp.hi}]")
    knot_gap = 1e-9 * max(1.0, pp.hi - pp.lo)
    if any(abs(at - b) <= knot_gap for b in pp.breakpoints):
        log.info("split point %.12g already a knot; partition unchanged", at)
        return pp
    return PiecewisePartition(tuple(sorted(pp.breakpoints + (at,))))


@dataclass
class SolverParams:
    formulation: str = "disjunctive"
    w: float = 0.5
    eps: float = 0.01
    time_limit: float = 600.0
    max_outer_iterations: int = 100
    events: list | None = None


@dataclass
class SolveOutcome:
    status: str                          # optimal | feasible | infeasible | timeout
    lb: float
    ub: float
    gap: float
    controls: list[tuple[float, float]] | None
    z: dict[tuple[int, int], int] | None
    n_outer: int
    wall_time: float
    nodes: int = 0
    infeasible_pairs: tuple = ()
    objective_parts: tuple[float, float] = (0.0, 0.0)   # (speed dev, heading dev)


def check_speed_violations(
    deltas: list[tuple[float, float]], bounds: list[ControlBounds], tol: float = SPEED_TOL
) -> list[SpeedViolation]:
    """Aircraft whose squared speed rate leaves [q_lo^2, q_hi^2] beyond tol."""
    out = []
    for i, ((dx, dy), cb) in enumerate(zip(deltas, bounds)):
        r = dx * dx + dy * dy
        if r > cb.q_hi * cb.q_hi + tol:
            out.append(SpeedViolation(i, UPPER, dx, dy))
        elif r < cb.q_lo * cb.q_lo - tol:
            out.append(SpeedViolation(i, LOWER, dx, dy))
    return out


def _add_speed_floor_machinery(
    m: MixedIntegerModel,
    i: int,
    pp_x: PiecewisePartition,
    pp_y: PiecewisePartition,
    cb: ControlBounds,
) -> None:
    """Lower speed-ring outer approximation for one aircraft.

    Auxiliary variables over-estimate each squared control component; their
    sum is floored at the squared minimum rate, and chord envelopes cap them
    from above, one indicator row per segment with a selector binary.
    """
    keys = (("delta_x", "tilde_dx", "seg_x", pp_x), ("delta_y", "tilde_dy", "seg_y", pp_y))
    tilde_ids = []
    for delta_key, tilde_key, seg_key, pp in keys:
        dvar = m.by_meaning(delta_key, i)
        t_lo = 0.0 if pp.lo <= 0.0 <= pp.hi else min(pp.lo**2, pp.hi**2)
        t_hi = max(pp.lo**2, pp.hi**2)
        tvar = m.add_var(CONTINUOUS, t_lo, t_hi, (tilde_key, i))
        tilde_ids.append(tvar)
        m.quad.append(
            QuadConstraint({(dvar.idx, dvar.idx): 1.0}, {tvar: -1.0}, 0.0, f"{tilde_key}_sq[{i}]")
        )
        alpha, beta = pp.lo + pp.hi, -pp.lo * pp.hi
        m.linear.append(
            LinearConstraint({tvar: 1.0, dvar.idx: -alpha}, "<=", beta, f"mccormick_{delta_key}[{i}]")
        )
        segs = []
        for k, ((a, b), (al, be)) in enumerate(zip(pp.segments(), pp.chords())):
            s = m.add_var(BINARY, 0, 1, (seg_key, i, k))
            segs.append(s)
            mdl._gate(m, LinearConstraint({tvar: 1.0, dvar.idx: -al}, "<=", be, f"chord_{delta_key}[{i},{k}]"), s, 1)
            mdl._gate(m, LinearConstraint({dvar.idx: 1.0}, "<=", b, f"seg_hi_{delta_key}[{i},{k}]"), s, 1)
            mdl._gate(m, LinearConstraint({dvar.idx: 1.0}, ">=", a, f"seg_lo_{delta_key}[{i},{k}]"), s, 1)
        m.linear.append(
            LinearConstraint({s: 1.0 for s in segs}, "==", 1.0, f"seg_pick_{delta_key}[{i}]")
        )
    m.linear.append(
        LinearConstraint({t: 1.0 for t in tilde_ids}, ">=", cb.q_lo**2, f"speed_lo[{i}]")
    )


def _build_model(aircraft, part, params, cbs, active_upper, partitions) -> MixedIntegerModel:
    builder = mdl.build_2d_disjunctive if params.formulation == "disjunctive" else mdl.build_2d_shadow
    m = builder(aircraft, part, params.w, cbs, relax_speed=True)
    for i in sorted(active_upper):
        mdl._add_speed_upper_quad(m, i)
    for i in sorted(partitions):
        _add_speed_floor_machinery(m, i, partitions[i]["x"], partitions[i]["y"], cbs[i])
    return m


def _deltas_from(model: MixedIntegerModel, x: np.ndarray, n: int) -> list[tuple[float, float]]:
    return [
        (float(x[model.by_meaning("delta_x", i).idx]), float(x[model.by_meaning("delta_y", i).idx]))
        for i in range(n)
    ]


def branch_assignment(model: MixedIntegerModel, x: np.ndarray) -> dict[tuple[int, int], int]:
    """Chosen separation branch per pair: the binary value, or the selected
    tangent-wedge region index for the four-binary formulation."""
    out: dict[tuple[int, int], int] = {}
    for v in model.vars:
        if v.kind != BINARY:
            continue
        if v.meaning[0] == "z":
            out[(v.meaning[1], v.meaning[2])] = int(round(x[v.idx]))
        elif v.meaning[0] == "sigma" and round(x[v.idx]) == 1:
            out[(v.meaning[1], v.meaning[2])] = int(v.meaning[3])
    return out


def verify_controls(
    aircraft: list[AircraftState],
    part: PairPartition,
    controls: list[tuple[float, float]],
    bounds: list[ControlBounds],
    tol: float = 1e-6,
) -> bool:
    """Independent feasibility check of a control vector.

    Bounds within tol and, for every separable pair, no conflict under the
    exact closed-form test.
    """
    for (q, th), cb in zip(controls, bounds):
        if not (cb.q_lo - tol <= q <= cb.q_hi + tol):
            return False
        if not (cb.theta_lo - tol <= th <= cb.theta_hi + tol):
            return False
    for (i, j) in part.separable:
        vx, vy = relative_velocity(aircraft[i], aircraft[j], controls[i][0], controls[i][1], controls[j][0], controls[j][1])
        if is_conflict(part.geometries[(i, j)], vx, vy):
            return False
    return True


def objective_of(controls, w) -> float:
    total = 0.0
    for q, th in controls:
        dx, dy = q * math.cos(th), q * math.sin(th)
        total += w * dy * dy + (1.0 - w) * (1.0 - dx) ** 2
    return total


def deviation_totals(controls) -> tuple[float, float]:
    """Total squared speed deviation and total squared heading deviation."""
    sq = sum((1.0 - q) ** 2 for q, _ in controls)
    st = sum(th * th for _, th in controls)
    return sq, st


def local_solve_fixed_z(
    comp: Compiled,
    full_ref: np.ndarray,
    aircraft: list[AircraftState],
    part: PairPartition,
    bounds: list[ControlBounds],
    w: float,
    rounds: int = 6,
) -> tuple[list[tuple[float, float]], float, np.ndarray] | None:
    """Feasible-point search with every binary pinned at its current value.

    ``full_ref`` is a full model-space point with integral binaries.  The
    nonconvex lower speed ring is replaced by its supporting half-plane at
    the current control direction (an inner approximation, so any solution
    is genuinely feasible); the convex upper ring is enforced by
    outer-approximation rounds.  The returned controls are re-verified with
    the exact geometry before being trusted.  Returns None when no feasible
    point is found.
    """
    model = comp.model
    n = len(aircraft)
    nc = comp.n
    lo, hi = comp.lb.copy(), comp.ub.copy()
    for cidx in comp.binaries:
        val = round(float(full_ref[comp.keep[cidx]]))
        lo[cidx] = hi[cidx] = val
    states = np.array(
        [round(float(full_ref[blk.model_idx])) for blk in comp.blocks], dtype=np.int8
    )
    base_rows, base_rhs = comp.assemble(states)
    dxi = [comp.pos[model.by_meaning("delta_x", i).idx] for i in range(n)]
    dyi = [comp.pos[model.by_meaning("delta_y", i).idx] for i in range(n)]

    point = np.array([full_ref[midx] for midx in comp.keep])
    best = None
    for _ in range(rounds):
        rows, rhs = [], []
        for i in range(n):
            ux, uy = point[dxi[i]], point[dyi[i]]
            norm = math.hypot(ux, uy)
            if norm < 1e-9:
                ux, uy = 1.0, 0.0
            else:
                ux, uy = ux / norm, uy / norm
            row = np.zeros(nc)
            row[dxi[i]], row[dyi[i]] = -ux, -uy
            rows.append(row)
            rhs.append(-bounds[i].q_lo)
        oa_rows: list[np.ndarray] = []
        oa_rhs: list[float] = []
        sol = None
        for _ in range(20):
            blocks = [base_rows, np.array(rows)]
            if oa_rows:
                blocks.append(np.array(oa_rows))
            a_ub = np.vstack(blocks)
            b_ub = np.concatenate([base_rhs, rhs, oa_rhs])
            qp = QpProblem.build(comp.q, comp.c, comp.a_eq, comp.b_eq, a_ub, b_ub, lo, hi)
            try:
                res = solve_qp(qp, warm_start=np.clip(point, lo, hi))
            except QpInfeasible:
                return best
            sol = res.x
            worst = None
            for i in range(n):
                dx, dy = sol[dxi[i]], sol[dyi[i]]
                viol = dx * dx + dy * dy - bounds[i].q_hi ** 2
                if viol > 1e-9 and (worst is None or viol > worst[0]):
                    worst = (viol, i, dx, dy)
            if worst is None:
                break
            _, i, dx, dy = worst
            row = np.zeros(nc)
            row[dxi[i]], row[dyi[i]] = 2 * dx, 2 * dy
            oa_rows.append(row)
            oa_rhs.append(bounds[i].q_hi ** 2 + dx * dx + dy * dy)
        if sol is None:
            return best
        controls = []
        ok = True
        for i in range(n):
            try:
                controls.append(recover_controls(float(sol[dxi[i]]), float(sol[dyi[i]])))
            except mdl.DegenerateControl:
                ok = False
                break
        if ok and verify_controls(aircraft, part, controls, bounds):
            obj = objective_of(controls, w)
            if best is None or obj < best[1] - 1e-12:
                best = (controls, obj, comp.expand(sol, states))
        if np.allclose(sol, point, atol=1e-10):
            break
        point = sol
    return best


def solve_2d_core(
    aircraft: list[AircraftState],
    d: float,
    bounds,
    params: SolverParams | None = None,
    part: PairPartition | None = None,
) -> SolveOutcome:
    """Full solve: pre-process, relax, then generate constraints to the gap.

    Returns Infeasible immediately when some pair cannot be separated at all,
    with those pairs as witness.  An optimal status always comes with
    independently verified, genuinely feasible controls.
    """
    params = params or SolverParams()
    start = time.perf_counter()
    cbs = mdl._per_aircraft_bounds(bounds, len(aircraft))
    if part is None:
        part = partition_pairs(aircraft, d, cbs)

    def elapsed():
        return time.perf_counter() - start

    def remaining():
        return max(1e-3, params.time_limit - elapsed())

    def outcome(status, lb, ub, controls, z, n_outer, nodes, witness=()):
        gap = 0.0 if ub <= 1e-15 else max(0.0, (ub - lb) / ub) if math.isfinite(ub) else math.inf
        parts = deviation_totals(controls) if controls else (0.0, 0.0)
        if status == "optimal" and controls is not None:
            if not verify_controls(aircraft, part, controls, cbs):
                raise RuntimeError("internal error: optimal controls failed verification")
        return SolveOutcome(
            status=status, lb=lb, ub=ub, gap=gap, controls=controls, z=z,
            n_outer=n_outer, wall_time=elapsed(), nodes=nodes,
            infeasible_pairs=tuple(witness), objective_parts=parts,
        )

    if part.non_separable:
        return outcome("infeasible", math.inf, math.inf, None, None, 0, 0, sorted(part.non_separable))
    if not part.separable:
        controls = [(1.0, 0.0)] * len(aircraft)
        return outcome("optimal", 0.0, 0.0, controls, {}, 0, 0)

    events = params.events
    nodes_total = 0
    active_upper: set[int] = set()
    partitions: dict[int, dict[str, PiecewisePartition]] = {}

    model = _build_model(aircraft, part, params, cbs, active_upper, partitions)
    comp = compile_model(model)
    res = branch_and_bound(model, BnBParams(params.eps, remaining(), events=events), compiled=comp)
    nodes_total += res.nodes
    if res.status == "infeasible":
        return outcome("infeasible", math.inf, math.inf, None, None, 0, nodes_total)
    if res.x is None:
        return outcome("timeout", res.lb, math.inf, None, None, 0, nodes_total)

    lb = res.lb
    deltas = _deltas_from(model, res.x, len(aircraft))
    violations = check_speed_violations(deltas, cbs)
    if not violations:
        controls = [recover_controls(dx, dy) for dx, dy in deltas]
        status = "timeout" if res.status == "timeout" else "optimal"
        return outcome(status, lb, res.ub, controls, branch_assignment(model, res.x), 0, nodes_total)

    ub = math.inf
    best_controls = None
    best_z = None
    n_outer = 0
    x_last = res.x
    while n_outer < params.max_outer_iterations:
        if elapsed() > params.time_limit:
            return outcome("timeout", lb, ub, best_controls, best_z, n_outer, nodes_total)
        polish = local_solve_fixed_z(comp, x_last, aircraft, part, cbs, params.w)
        if polish is not None and polish[1] < ub - 1e-12:
            best_controls, ub = polish[0], polish[1]
            best_z = branch_assignment(model, polish[2])
            if events is not None:
                events.append({"event": "polish_incumbent", "ub": ub, "outer": n_outer})
        if ub < math.inf and (ub - lb) <= params.eps * max(ub, 1e-12):
            return outcome("optimal", lb, ub, best_controls, best_z, n_outer, nodes_total)

        for v in violations:
            i = v.aircraft
            if v.kind == UPPER:
                active_upper.add(i)
                continue
            x_lo, x_hi, y_lo, y_hi = mdl._delta_bounds(cbs[i])
            if i not in partitions:
                partitions[i] = {"x": initial_partition(x_lo, x_hi), "y": initial_partition(y_lo, y_hi)}
            for axis, val in (("x", v.delta_x), ("y", v.delta_y)):
                pp = partitions[i][axis]
                tilde_key = "tilde_dx" if axis == "x" else "tilde_dy"
                try:
                    tilde_val = float(x_last[model.by_meaning(tilde_key, i).idx])
                except KeyError:
                    tilde_val = math.inf     # machinery not built yet: force a split
                if tilde_val > val * val + 1e-9 and pp.lo < val < pp.hi:
                    partitions[i][axis] = refine_partition(pp, val)

        model = _build_model(aircraft, part, params, cbs, active_upper, partitions)
        comp = compile_model(model)
        res = branch_and_bound(model, BnBParams(params.eps, remaining(), events=events), compiled=comp)
        nodes_total += res.nodes
        n_outer += 1
        if events is not None:
            events.append({"event": "outer_iteration", "n": n_outer, "lb": res.lb, "ub": ub})
        if res.status == "infeasible":
            return outcome("infeasible", math.inf, math.inf, None, None, n_outer, nodes_total)
        if res.x is None:
            return outcome("timeout", lb, ub, best_controls, best_z, n_outer, nodes_total)
        lb = max(lb, res.lb)
        x_last = res.x
        deltas = _deltas_from(model, res.x, len(aircraft))
        violations = check_speed_violations(deltas, cbs)
        if not violations:
            controls = [recover_controls(dx, dy) for dx, dy in deltas]
            status = "timeout" if res.status == "timeout" else "optimal"
            return outcome(status, max(lb, res.lb), res.ub, controls, branch_assignment(model, res.x), n_outer, nodes_total)
        if ub < math.inf and (ub - lb) <= params.eps * max(ub, 1e-12):
            return outcome("optimal", lb, ub, best_controls, best_z, n_outer, nodes_total)
    return outcome("feasible" if best_controls else "timeout", lb, ub, best_controls, best_z, n_outer, nodes_total)

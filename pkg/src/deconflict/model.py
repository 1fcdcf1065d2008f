"""Formulation-agnostic mixed-integer model containers and builders.

A model is a plain record of variables, linear / convex-quadratic / indicator
constraints and a convex quadratic objective.  Builders translate an aircraft
set and a pair partition into the concrete conflict-resolution formulations:
the branch-selected half-plane separation model (one binary per pair), the
tangent-wedge alternative (four binaries per pair), and the flight-level
extension that gates separation on sharing a level.

Containers stay symbolic: indicator constraints keep their binary gate and a
precomputed big-M; the solver decides how to realise them per node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    AircraftState,
    ControlBounds,
    PairGeometry,
    PairPartition,
    conflict_free_hull_cuts,
)

CONTINUOUS = "continuous"
BINARY = "binary"


class DegenerateControl(ValueError):
    """Polar control components are both too small to define a heading."""


class MissingFLData(ValueError):
    """Flight-level construction requested without reachable-level sets."""


@dataclass(frozen=True)
class VarRef:
    idx: int
    kind: str
    lo: float
    hi: float
    meaning: tuple

    def name(self) -> str:
        head, *rest = self.meaning
        return f"{head}({','.join(str(r) for r in rest)})"


@dataclass(frozen=True)
class LinearConstraint:
    coeffs: dict[int, float]
    sense: str               # "<=", ">=", "=="
    rhs: float
    name: str = ""

    def value(self, x) -> float:
        return sum(c * x[i] for i, c in self.coeffs.items())

    def satisfied(self, x, tol: float = 1e-9) -> bool:
        v = self.value(x)
        if self.sense == "<=":
            return v <= self.rhs + tol
        if self.sense == ">=":
            return v >= self.rhs - tol
        return abs(v - self.rhs) <= tol


@dataclass(frozen=True)
class QuadConstraint:
    """Convex row  sum q[i,j] x_i x_j + sum lin[i] x_i <= rhs."""

    quad: dict[tuple[int, int], float]
    lin: dict[int, float]
    rhs: float
    name: str = ""

    def value(self, x) -> float:
        v = sum(c * x[i] * x[j] for (i, j), c in self.quad.items())
        return v + sum(c * x[i] for i, c in self.lin.items())

    def violation(self, x) -> float:
        return max(0.0, self.value(x) - self.rhs)


@dataclass(frozen=True)
class IndicatorConstraint:
    binary: int
    active_value: int
    constraint: LinearConstraint
    big_m: float

    def satisfied(self, x, tol: float = 1e-9) -> bool:
        if abs(x[self.binary] - self.active_value) > 0.5:
            return True
        return self.constraint.satisfied(x, tol)


@dataclass
class MixedIntegerModel:
    tag: str
    vars: list[VarRef] = field(default_factory=list)
    linear: list[LinearConstraint] = field(default_factory=list)
    quad: list[QuadConstraint] = field(default_factory=list)
    indicators: list[IndicatorConstraint] = field(default_factory=list)
    objective_quad: dict[tuple[int, int], float] = field(default_factory=dict)
    objective_lin: dict[int, float] = field(default_factory=dict)
    objective_const: float = 0.0
    meta: dict = field(default_factory=dict)

    def add_var(self, kind: str, lo: float, hi: float, meaning: tuple) -> int:
        if kind == BINARY:
            lo, hi = 0.0, 1.0
        ref = VarRef(len(self.vars), kind, lo, hi, meaning)
        self.vars.append(ref)
        return ref.idx

    def by_meaning(self, *meaning) -> VarRef:
        key = tuple(meaning)
        for v in self.vars:
            if v.meaning == key:
                return v
        raise KeyError(f"no variable with meaning {key}")

    def binaries(self) -> list[VarRef]:
        return [v for v in self.vars if v.kind == BINARY]

    def objective_value(self, x) -> float:
        v = self.objective_const + sum(c * x[i] for i, c in self.objective_lin.items())
        return v + sum(c * x[i] * x[j] for (i, j), c in self.objective_quad.items())

    def feasible(self, x, tol: float = 1e-6) -> bool:
        """Full constraint check at a point, binaries included."""
        for v in self.vars:
            if not v.lo - tol <= x[v.idx] <= v.hi + tol:
                return False
            if v.kind == BINARY and min(abs(x[v.idx]), abs(x[v.idx] - 1.0)) > tol:
                return False
        return (
            all(c.satisfied(x, tol) for c in self.linear)
            and all(q.violation(x) <= tol for q in self.quad)
            and all(ic.satisfied(x, tol) for ic in self.indicators)
        )


def lint_model(m: MixedIntegerModel) -> None:
    """Structural checks: unique meanings, valid references, convexity."""
    seen = set()
    for v in m.vars:
        if v.meaning in seen:
            raise ValueError(f"duplicate variable meaning {v.meaning}")
        seen.add(v.meaning)
        if v.kind == BINARY and (v.lo, v.hi) != (0.0, 1.0):
            raise ValueError(f"binary {v.name()} must have unit bounds")
    nvar = len(m.vars)

    def check_ids(ids, where):
        for i in ids:
            if not 0 <= i < nvar:
                raise ValueError(f"{where} references unknown variable {i}")

    for c in m.linear:
        check_ids(c.coeffs, f"linear row {c.name!r}")
    for qc in m.quad:
        check_ids(qc.lin, f"quad row {qc.name!r}")
        ids = sorted({i for ij in qc.quad for i in ij})
        check_ids(ids, f"quad row {qc.name!r}")
        pos = {v: k for k, v in enumerate(ids)}
        dense = np.zeros((len(ids), len(ids)))
        for (i, j), coef in qc.quad.items():
            dense[pos[i], pos[j]] += coef / (1 if i == j else 2)
            if i != j:
                dense[pos[j], pos[i]] += coef / 2
        if ids and float(np.linalg.eigvalsh(dense).min()) < -1e-9:
            raise ValueError(f"quad row {qc.name!r} is not convex")
    for ic in m.indicators:
        if m.vars[ic.binary].kind != BINARY:
            raise ValueError(f"indicator row {ic.constraint.name!r} gated on a non-binary")
        check_ids(ic.constraint.coeffs, f"indicator row {ic.constraint.name!r}")
    ids = sorted({i for ij in m.objective_quad for i in ij})
    pos = {v: k for k, v in enumerate(ids)}
    dense = np.zeros((len(ids), len(ids)))
    for (i, j), coef in m.objective_quad.items():
        dense[pos[i], pos[j]] += coef / (1 if i == j else 2)
        if i != j:
            dense[pos[j], pos[i]] += coef / 2
    if ids and float(np.linalg.eigvalsh(dense).min()) < -1e-9:
        raise ValueError("objective is not convex")


def _interval_max(coeffs: dict[int, float], vars: list[VarRef]) -> float:
    """Upper bound of a linear expression over the variable box."""
    total = 0.0
    for i, c in coeffs.items():
        total += c * (vars[i].hi if c >= 0 else vars[i].lo)
    return total


def _delta_bounds(cb: ControlBounds) -> tuple[float, float, float, float]:
    x_lo = cb.q_lo * math.cos(cb.theta_abs_max)
    x_hi = cb.q_hi
    y_lo = cb.q_hi * math.sin(cb.theta_lo)
    y_hi = cb.q_hi * math.sin(cb.theta_hi)
    return x_lo, x_hi, y_lo, y_hi


def _per_aircraft_bounds(bounds, n) -> list[ControlBounds]:
    if isinstance(bounds, ControlBounds):
        return [bounds] * n
    if len(bounds) != n:
        raise ValueError("need one control-bounds entry per aircraft")
    return list(bounds)


def _add_control_core(m, aircraft, cbs, w):
    """Polar control variables, heading rows and the deviation objective."""
    for i, (state, cb) in enumerate(zip(aircraft, cbs)):
        x_lo, x_hi, y_lo, y_hi = _delta_bounds(cb)
        dx = m.add_var(CONTINUOUS, x_lo, x_hi, ("delta_x", i))
        dy = m.add_var(CONTINUOUS, y_lo, y_hi, ("delta_y", i))
        m.linear.append(
            LinearConstraint({dy: 1.0, dx: -math.tan(cb.theta_lo)}, ">=", 0.0, f"hdg_lo[{i}]")
        )
        m.linear.append(
            LinearConstraint({dy: 1.0, dx: -math.tan(cb.theta_hi)}, "<=", 0.0, f"hdg_hi[{i}]")
        )
        m.objective_quad[(dy, dy)] = w
        m.objective_quad[(dx, dx)] = 1.0 - w
        m.objective_lin[dx] = -2.0 * (1.0 - w)
        m.objective_const += 1.0 - w


def _add_pair_velocity(m, aircraft, i, j, pg: PairGeometry):
    """Relative-velocity variables tied to the controls by motion rows."""
    box = pg.box
    vx = m.add_var(CONTINUOUS, box.vx_lo, box.vx_hi, ("vx", i, j))
    vy = m.add_var(CONTINUOUS, box.vy_lo, box.vy_hi, ("vy", i, j))
    coeffs_x: dict[int, float] = {vx: 1.0}
    coeffs_y: dict[int, float] = {vy: 1.0}
    for idx, sign in ((i, 1.0), (j, -1.0)):
        state = aircraft[idx]
        ch = state.speed * math.cos(state.heading)
        sh = state.speed * math.sin(state.heading)
        dx = m.by_meaning("delta_x", idx).idx
        dy = m.by_meaning("delta_y", idx).idx
        coeffs_x[dx] = coeffs_x.get(dx, 0.0) - sign * ch
        coeffs_x[dy] = coeffs_x.get(dy, 0.0) + sign * sh
        coeffs_y[dx] = coeffs_y.get(dx, 0.0) - sign * sh
        coeffs_y[dy] = coeffs_y.get(dy, 0.0) - sign * ch
    m.linear.append(LinearConstraint(coeffs_x, "==", 0.0, f"motion_x[{i},{j}]"))
    m.linear.append(LinearConstraint(coeffs_y, "==", 0.0, f"motion_y[{i},{j}]"))
    return vx, vy


def _gate(m, row: LinearConstraint, binary: int, active: int, extra_gates=()):
    """Attach a row to its binary gate with a box-tight big-M.

    ``extra_gates`` lists additional (binary, active_value) pairs; those are
    folded into the row directly as big-M terms, keeping the container's
    one-binary indicator shape.
    """
    if row.sense == ">=":
        row = LinearConstraint({k: -v for k, v in row.coeffs.items()}, "<=", -row.rhs, row.name)
    big_m = max(0.0, _interval_max(row.coeffs, m.vars) - row.rhs)
    if extra_gates:
        coeffs = dict(row.coeffs)
        rhs = row.rhs
        for b, val in extra_gates:
            # Row may be violated by up to big_m whenever gate b is inactive.
            if val == 1:
                coeffs[b] = coeffs.get(b, 0.0) + big_m
                rhs += big_m
            else:
                coeffs[b] = coeffs.get(b, 0.0) - big_m
        row = LinearConstraint(coeffs, "<=", rhs, row.name)
        big_m = max(0.0, _interval_max(row.coeffs, m.vars) - row.rhs)
    m.indicators.append(IndicatorConstraint(binary, active, row, big_m))


def _add_disjunctive_separation(m, i, j, pg: PairGeometry, vx, vy, extra_gates=()):
    na, nb = pg.normal_line
    gl, gh = pg.guard_low, pg.guard_high
    z = m.add_var(BINARY, 0, 1, ("z", i, j))
    _gate(m, LinearConstraint({vx: na, vy: nb}, "<=", 0.0, f"sep_norm1[{i},{j}]"), z, 1, extra_gates)
    _gate(m, LinearConstraint({vx: gl[0], vy: gl[1]}, "<=", 0.0, f"sep_low[{i},{j}]"), z, 1, extra_gates)
    _gate(m, LinearConstraint({vx: na, vy: nb}, ">=", 0.0, f"sep_norm0[{i},{j}]"), z, 0, extra_gates)
    _gate(m, LinearConstraint({vx: gh[0], vy: gh[1]}, ">=", 0.0, f"sep_high[{i},{j}]"), z, 0, extra_gates)
    return z


def shadow_angles(pg: PairGeometry) -> tuple[float, float]:
    """Headings of the tangent lines from the relative position to the disc.

    Returns (left, right) as the sight-line heading plus/minus the tangent
    half-angle asin(d / separation).
    """
    dist = math.hypot(pg.rel_x, pg.rel_y)
    beta = math.atan2(-pg.rel_y, -pg.rel_x)
    half = math.asin(min(1.0, pg.d / dist))
    return beta + half, beta - half


def _add_shadow_separation(m, i, j, pg: PairGeometry, vx, vy):
    """Tangent-wedge separation with four selector binaries.

    Rows are written in the pair frame rotated so the conflict wedge opens
    along the negative axis; there the wedge never straddles the vertical and
    tangent slopes stay finite.  Two selectors cover the diverging half-plane
    outright, two escape past each tangent on the converging side; their
    union is exactly the conflict-free set.
    """
    left, right = shadow_angles(pg)
    beta = math.atan2(-pg.rel_y, -pg.rel_x)
    half = 0.5 * (left - right)
    alpha = beta - math.pi
    ux, uy = math.cos(alpha), math.sin(alpha)      # rotated +x axis
    wx_, wy_ = -math.sin(alpha), math.cos(alpha)   # rotated +y axis
    t = math.tan(half)

    sigmas = []
    rows = {
        1: [({vx: -ux, vy: -uy}, "div"), ({vx: -wx_, vy: -wy_}, "upper")],
        2: [({vx: -ux, vy: -uy}, "div"), ({vx: wx_, vy: wy_}, "lower")],
        3: [({vx: ux, vy: uy}, "conv"), ({vx: wx_ - t * ux, vy: wy_ - t * uy}, "below")],
        4: [({vx: ux, vy: uy}, "conv"), ({vx: -wx_ - t * ux, vy: -wy_ - t * uy}, "above")],
    }
    for k in range(1, 5):
        s = m.add_var(BINARY, 0, 1, ("sigma", i, j, k))
        sigmas.append(s)
        for coeffs, label in rows[k]:
            _gate(m, LinearConstraint(dict(coeffs), "<=", 0.0, f"shadow{k}_{label}[{i},{j}]"), s, 1)
    m.linear.append(
        LinearConstraint({s: 1.0 for s in sigmas}, ">=", 1.0, f"shadow_pick[{i},{j}]")
    )
    m.meta.setdefault("shadow_angles", {})[(i, j)] = (left, right)
    return sigmas


def _add_speed_upper_quad(m, i):
    dx = m.by_meaning("delta_x", i).idx
    dy = m.by_meaning("delta_y", i).idx
    cb_hi = m.meta["control_bounds"][i].q_hi
    m.quad.append(
        QuadConstraint({(dx, dx): 1.0, (dy, dy): 1.0}, {}, cb_hi * cb_hi, f"speed_hi[{i}]")
    )


def _build_2d(aircraft, part, w, cb, relax_speed, separation, tag):
    if not 0.0 < w < 1.0:
        raise ValueError("preference weight must lie strictly between 0 and 1")
    cbs = _per_aircraft_bounds(cb, len(aircraft))
    m = MixedIntegerModel(tag=tag)
    m.meta["control_bounds"] = cbs
    m.meta["n_aircraft"] = len(aircraft)
    m.meta["w"] = w
    _add_control_core(m, aircraft, cbs, w)
    m.meta["pairs"] = sorted(part.separable)
    for (i, j) in m.meta["pairs"]:
        pg = part.geometries[(i, j)]
        vx, vy = _add_pair_velocity(m, aircraft, i, j, pg)
        separation(m, i, j, pg, vx, vy)
        # Valid inequalities: the convex hull of the conflict-free part of
        # the box binds regardless of the branch, tightening relaxations.
        for k, (a, b, c) in enumerate(conflict_free_hull_cuts(pg)):
            m.linear.append(LinearConstraint({vx: a, vy: b}, "<=", c, f"hull[{i},{j},{k}]"))
    if not relax_speed:
        for i in range(len(aircraft)):
            _add_speed_upper_quad(m, i)
    return m


def build_2d_disjunctive(aircraft, part: PairPartition, w: float, cb, relax_speed: bool = True) -> MixedIntegerModel:
    """Two-dimensional model with one branch binary per separable pair.

    ``relax_speed`` drops the speed-rate magnitude constraint entirely; the
    convex upper half can be restored (the nonconvex lower half never lives
    in the container and is enforced by the solving loop).
    """
    return _build_2d(aircraft, part, w, cb, relax_speed, _add_disjunctive_separation, "Disjunctive2D")


def build_2d_shadow(aircraft, part: PairPartition, w: float, cb, relax_speed: bool = True) -> MixedIntegerModel:
    """Two-dimensional model with four tangent-wedge binaries per pair."""
    return _build_2d(aircraft, part, w, cb, relax_speed, _add_shadow_separation, "Shadow2D")


def build_fl_model(aircraft, part: PairPartition, w: float, cb, relax_speed: bool = True) -> MixedIntegerModel:
    """Monolithic 2D + flight-level model.

    Aircraft pick exactly one level from their reachable set; a pair binary
    records level sharing, and the half-plane separation rows of every not
    conflict-free pair with overlapping level sets are active only when both
    the branch binary and the sharing binary are on.
    """
    if any(a.fl_set is None for a in aircraft):
        raise MissingFLData("every aircraft needs a reachable flight-level set")
    cbs = _per_aircraft_bounds(cb, len(aircraft))
    m = MixedIntegerModel(tag="Disjunctive2D")
    m.meta["control_bounds"] = cbs
    m.meta["n_aircraft"] = len(aircraft)
    m.meta["w"] = w
    m.meta["fl_layer"] = True
    _add_control_core(m, aircraft, cbs, w)

    for i, state in enumerate(aircraft):
        levels = sorted(state.fl_set)
        rhos = {k: m.add_var(BINARY, 0, 1, ("rho", i, k)) for k in levels}
        m.linear.append(
            LinearConstraint({r: 1.0 for r in rhos.values()}, "==", 1.0, f"fl_assign[{i}]")
        )

    shared = sorted(
        (i, j)
        for (i, j) in set(part.separable) | set(part.non_separable)
        if aircraft[i].fl_set & aircraft[j].fl_set
    )
    m.meta["pairs"] = shared
    for (i, j) in shared:
        pg = part.geometries[(i, j)]
        vx, vy = _add_pair_velocity(m, aircraft, i, j, pg)
        phi = m.add_var(BINARY, 0, 1, ("phi", i, j))
        for k in sorted(aircraft[i].fl_set & aircraft[j].fl_set):
            m.linear.append(
                LinearConstraint(
                    {m.by_meaning("rho", i, k).idx: 1.0, m.by_meaning("rho", j, k).idx: 1.0, phi: -1.0},
                    "<=",
                    1.0,
                    f"fl_share[{i},{j},{k}]",
                )
            )
        _add_disjunctive_separation(m, i, j, pg, vx, vy, extra_gates=((phi, 1),))
    if not relax_speed:
        for i in range(len(aircraft)):
            _add_speed_upper_quad(m, i)
    return m


def recover_controls(delta_x: float, delta_y: float) -> tuple[float, float]:
    """Map polar control components back to (speed rate, heading change)."""
    q = math.hypot(delta_x, delta_y)
    if q < 1e-9:
        raise DegenerateControl("control vector is numerically zero")
    return q, math.atan2(delta_y, delta_x)


def lp_dump(m: MixedIntegerModel) -> str:
    """Human-readable text form of the model, one constraint per line."""

    def term(coef, var):
        return f"{coef:+.12g} {m.vars[var].name()}"

    def expr(coeffs):
        return " ".join(term(c, i) for i, c in sorted(coeffs.items()))

    lines = [f"\\ formulation: {m.tag}  vars: {len(m.vars)}  binaries: {len(m.binaries())}"]
    obj = [f"{c:+.12g} {m.vars[i].name()}^2" for (i, j), c in sorted(m.objective_quad.items()) if i == j]
    obj += [
        f"{c:+.12g} {m.vars[i].name()}*{m.vars[j].name()}"
        for (i, j), c in sorted(m.objective_quad.items())
        if i != j
    ]
    obj += [term(c, i) for i, c in sorted(m.objective_lin.items())]
    if m.objective_const:
        obj.append(f"{m.objective_const:+.12g}")
    lines.append("minimize: " + " ".join(obj))
    lines.append("subject to:")
    for c in m.linear:
        lines.append(f"  {c.name}: {expr(c.coeffs)} {c.sense} {c.rhs:.12g}")
    for qc in m.quad:
        quad = " ".join(
            f"{coef:+.12g} {m.vars[i].name()}*{m.vars[j].name()}" for (i, j), coef in sorted(qc.quad.items())
        )
        lin = (" " + expr(qc.lin)) if qc.lin else ""
        lines.append(f"  {qc.name}: {quad}{lin} <= {qc.rhs:.12g}")
    for ic in m.indicators:
        c = ic.constraint
        lines.append(
            f"  {c.name}: {m.vars[ic.binary].name()} = {ic.active_value} -> "
            f"{expr(c.coeffs)} {c.sense} {c.rhs:.12g}  [M={ic.big_m:.12g}]"
        )
    lines.append("bounds:")
    for v in m.vars:
        lines.append(f"  {v.lo:.12g} <= {v.name()} <= {v.hi:.12g}")
    lines.append("binaries: " + " ".join(v.name() for v in m.binaries()))
    return "\n".join(lines) + "\n"

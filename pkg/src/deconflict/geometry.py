"""Closed-form pairwise separation geometry in the relative-velocity plane.

All reasoning happens in the frame of one aircraft pair: the relative
position ``(rel_x, rel_y)`` is fixed, the relative velocity ``(vx, vy)`` is
the decision.  A pair stays separated by at least ``d`` for all future time
iff the relative velocity avoids a convex wedge (the conflict region).  The
wedge is bounded by the two tangent lines from the relative position to the
disc of radius ``d`` and is split in half by the line normal to the relative
position, which lets a single on/off branch select one of two convex
conflict-free half-plane systems.

Distances are nautical miles, speeds NM/h, angles radians, times hours.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from enum import Enum

TOL_V = 1e-9            # below this relative speed the pair never closes
TOL_G = 1e-6            # clearance tolerance, scaled by d^2 * |v|^2
TOL_T = 1e-9            # closing-time tolerance, hours
TOL_FEAS = 1e-8         # feasibility tolerance for extreme-point tests


class InitialLossOfSeparation(ValueError):
    """A pair of aircraft is closer than the separation norm at t=0."""


class DegenerateControl(ValueError):
    """Control vector has no direction (both polar components near zero)."""


@dataclass(frozen=True)
class AircraftState:
    """Initial position, nominal velocity and optional flight-level data."""

    x: float
    y: float
    speed: float
    heading: float
    fl: int | None = None
    fl_set: frozenset[int] | None = None

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        if not -math.pi < self.heading <= math.pi:
            raise ValueError(f"heading must lie in (-pi, pi], got {self.heading}")
        if self.fl_set is not None:
            object.__setattr__(self, "fl_set", frozenset(self.fl_set))
            if self.fl is None or self.fl not in self.fl_set:
                raise ValueError("base flight level must belong to the reachable set")

    def velocity(self, q: float = 1.0, theta: float = 0.0) -> tuple[float, float]:
        """Ground velocity under speed rate ``q`` and heading change ``theta``."""
        a = self.heading + theta
        return q * self.speed * math.cos(a), q * self.speed * math.sin(a)


@dataclass(frozen=True)
class ControlBounds:
    """Admissible ranges for the speed-rate and heading-change controls."""

    q_lo: float = 0.94
    q_hi: float = 1.03
    theta_lo: float = -math.pi / 6
    theta_hi: float = math.pi / 6

    def __post_init__(self):
        if not 0 < self.q_lo <= 1 <= self.q_hi:
            raise ValueError(f"speed-rate bounds must satisfy 0 < lo <= 1 <= hi, got [{self.q_lo}, {self.q_hi}]")
        if not self.theta_lo <= 0 <= self.theta_hi:
            raise ValueError("heading bounds must bracket zero")
        if max(abs(self.theta_lo), abs(self.theta_hi)) >= math.pi / 2:
            raise ValueError("heading change must stay below a quarter turn")

    @property
    def theta_abs_max(self) -> float:
        return max(abs(self.theta_lo), abs(self.theta_hi))


@dataclass(frozen=True)
class VelocityBox:
    """Axis-aligned bounds on the reachable relative velocity of a pair."""

    vx_lo: float
    vx_hi: float
    vy_lo: float
    vy_hi: float

    def __post_init__(self):
        if self.vx_lo > self.vx_hi or self.vy_lo > self.vy_hi:
            raise ValueError("velocity box bounds are inverted")

    def corners(self) -> list[tuple[float, float]]:
        return [
            (self.vx_lo, self.vy_lo),
            (self.vx_lo, self.vy_hi),
            (self.vx_hi, self.vy_lo),
            (self.vx_hi, self.vy_hi),
        ]

    def contains(self, vx: float, vy: float, tol: float = TOL_FEAS) -> bool:
        return (
            self.vx_lo - tol <= vx <= self.vx_hi + tol
            and self.vy_lo - tol <= vy <= self.vy_hi + tol
        )


class PairClass(Enum):
    CONFLICT_FREE = "conflict_free"
    SEPARABLE = "separable"
    NON_SEPARABLE = "non_separable"


@dataclass(frozen=True)
class PairGeometry:
    """Derived separation geometry of one aircraft pair.

    Lines through the origin of the relative-velocity plane are stored as
    coefficient pairs ``(a, b)`` meaning ``a*vx + b*vy = 0``:

    - ``radial_line``: zero set of the closing speed; positive side diverges.
    - ``normal_line``: perpendicular of the radial line; it bisects the
      conflict wedge and splits it between the two on/off branches.
    - ``guard_low``: wedge boundary on the branch where the normal-line value
      is non-positive; conflict side has ``value >= 0``.
    - ``guard_high``: wedge boundary on the opposite branch; conflict side
      has ``value <= 0``.

    The conflict wedge is exactly ``{guard_low >= 0} ∩ {guard_high <= 0}``.
    """

    rel_x: float
    rel_y: float
    d: float
    radial_line: tuple[float, float]
    normal_line: tuple[float, float]
    guard_low: tuple[float, float]
    guard_high: tuple[float, float]
    box: VelocityBox | None = None

    def with_box(self, box: VelocityBox) -> "PairGeometry":
        return replace(self, box=box)

    def line_value(self, line: tuple[float, float], vx: float, vy: float) -> float:
        return line[0] * vx + line[1] * vy

    def in_conflict_wedge(self, vx: float, vy: float, tol: float = 0.0) -> bool:
        """Membership in the closed conflict region, optionally shrunk by tol."""
        return (
            self.line_value(self.guard_low, vx, vy) >= tol
            and self.line_value(self.guard_high, vx, vy) <= -tol
        )


def _distinct_root_lines(rel_x: float, rel_y: float, d: float) -> list[tuple[float, float]]:
    """Boundary lines of the conflict double-cone as (a, b) coefficient pairs.

    The zero set of the clearance form factors into two lines.  Each line can
    be read off by isolating either velocity component; an isolation
    degenerates when its leading coefficient vanishes, so candidates from
    both isolations are pooled and deduplicated by direction.
    """
    root = math.sqrt(max(rel_x * rel_x + rel_y * rel_y - d * d, 0.0))
    cross = rel_x * rel_y
    cands = [
        (rel_y * rel_y - d * d, -(cross + d * root)),
        (rel_y * rel_y - d * d, -(cross - d * root)),
        (-(cross + d * root), rel_x * rel_x - d * d),
        (-(cross - d * root), rel_x * rel_x - d * d),
    ]
    scale = rel_x * rel_x + rel_y * rel_y
    lines: list[tuple[float, float]] = []
    for a, b in cands:
        norm = math.hypot(a, b)
        if norm <= 1e-12 * scale:
            continue
        a, b = a / norm, b / norm
        if a < 0 or (a == 0 and b < 0):
            a, b = -a, -b
        if all(abs(a * ob - b * oa) > 1e-9 for oa, ob in lines):
            lines.append((a, b))
    if not 1 <= len(lines) <= 2:
        raise AssertionError(f"expected 1 or 2 distinct root lines, got {lines}")
    return lines


def relative_state(
    a: AircraftState,
    b: AircraftState,
    d: float,
    cb_a: ControlBounds | None = None,
    cb_b: ControlBounds | None = None,
) -> PairGeometry:
    """Build the separation geometry of pair (a, b).

    The guard lines are oriented so that the conflict wedge (the set of
    relative velocities leading to a future loss of separation) is
    ``{guard_low >= 0} ∩ {guard_high <= 0}``, with ``guard_low`` bounding the
    wedge half on the non-positive side of the normal line.

    Raises InitialLossOfSeparation when the pair starts closer than ``d``.
    """
    rel_x = a.x - b.x
    rel_y = a.y - b.y
    sq = rel_x * rel_x + rel_y * rel_y
    if sq < d * d * (1 - 1e-12):
        raise InitialLossOfSeparation(
            f"pair starts {math.sqrt(sq):.3f} NM apart, below the {d} NM norm"
        )

    lines = _distinct_root_lines(rel_x, rel_y, d)
    if len(lines) == 1:
        lines = [lines[0], lines[0]]

    # Interior conflict witness: closing head-on along the sight line.
    wx, wy = -rel_x, -rel_y
    low = high = None
    for line in lines:
        # Ray of this line inside the converging half-plane.
        dx, dy = -line[1], line[0]
        if rel_x * dx + rel_y * dy > 0:
            dx, dy = -dx, -dy
        side = rel_x * dy - rel_y * dx  # normal-line value at the ray
        if side <= 0 and low is None:
            low = line
        else:
            high = line
    if low is None or high is None:
        # Tangent case: both boundaries coincide with the sight line.
        low = high = lines[0]

    sgn = 1.0 if low[0] * wx + low[1] * wy > 0 else -1.0
    guard_low = (sgn * low[0], sgn * low[1])
    sgn = -1.0 if high[0] * wx + high[1] * wy > 0 else 1.0
    guard_high = (sgn * high[0], sgn * high[1])

    pg = PairGeometry(
        rel_x=rel_x,
        rel_y=rel_y,
        d=d,
        radial_line=(rel_x, rel_y),
        normal_line=(-rel_y, rel_x),
        guard_low=guard_low,
        guard_high=guard_high,
    )
    if cb_a is not None and cb_b is not None:
        pg = pg.with_box(velocity_box(a, b, cb_a, cb_b))
    return pg


def closest_approach_margin(pg: PairGeometry, vx: float, vy: float) -> float:
    """Scaled clearance at the time of closest approach.

    Non-negative iff the minimum over all real time of the pair distance is
    at least ``d``.  Equals the squared-distance discriminant scaled by the
    squared relative speed, so it is a polynomial in the velocity:

        vx^2 (rel_y^2 - d^2) + vy^2 (rel_x^2 - d^2) - 2 vx vy rel_x rel_y
    """
    return (
        vx * vx * (pg.rel_y * pg.rel_y - pg.d * pg.d)
        + vy * vy * (pg.rel_x * pg.rel_x - pg.d * pg.d)
        - 2.0 * vx * vy * pg.rel_x * pg.rel_y
    )


def time_of_closest_approach(pg: PairGeometry, vx: float, vy: float) -> float | None:
    """Unconstrained minimiser of the pair distance over time.

    Returns None when the relative speed is below ``TOL_V``: the pair keeps
    its initial spacing forever, which is at least ``d`` by construction.
    """
    v2 = vx * vx + vy * vy
    if v2 < TOL_V * TOL_V:
        return None
    return -(pg.rel_x * vx + pg.rel_y * vy) / v2


def is_conflict(pg: PairGeometry, vx: float, vy: float) -> bool:
    """True iff this relative velocity leads to a future loss of separation.

    A conflict needs both a strictly negative closest-approach clearance and
    a strictly positive closing time; each test carries a scale-aware
    tolerance so boundary solutions are accepted as separated.
    """
    t = time_of_closest_approach(pg, vx, vy)
    if t is None or t <= TOL_T:
        return False
    scale = pg.d * pg.d * (vx * vx + vy * vy)
    return closest_approach_margin(pg, vx, vy) < -TOL_G * scale


def satisfies_disjunction(pg: PairGeometry, vx: float, vy: float, tol: float = 0.0) -> bool:
    """Feasibility of the branch-selected half-plane separation conditions.

    One branch pairs a non-positive normal-line value with ``guard_low <= 0``,
    the other a non-negative normal-line value with ``guard_high >= 0``.  A
    relative velocity is conflict-free iff some branch holds.  ``tol`` is an
    absolute slack applied to every inequality.
    """
    n = pg.line_value(pg.normal_line, vx, vy)
    if n <= tol and pg.line_value(pg.guard_low, vx, vy) <= tol:
        return True
    return n >= -tol and pg.line_value(pg.guard_high, vx, vy) >= -tol


def _interval_mul(lo1: float, hi1: float, lo2: float, hi2: float) -> tuple[float, float]:
    vals = (lo1 * lo2, lo1 * hi2, hi1 * lo2, hi1 * hi2)
    return min(vals), max(vals)


def _polar_component_intervals(cb: ControlBounds) -> tuple[tuple[float, float], tuple[float, float]]:
    """Ranges of q*cos(theta) and q*sin(theta) over the control box."""
    cos_lo = math.cos(cb.theta_abs_max)
    cos_hi = 1.0 if cb.theta_lo <= 0.0 <= cb.theta_hi else max(math.cos(cb.theta_lo), math.cos(cb.theta_hi))
    qcos = _interval_mul(cb.q_lo, cb.q_hi, cos_lo, cos_hi)
    qsin = _interval_mul(cb.q_lo, cb.q_hi, math.sin(cb.theta_lo), math.sin(cb.theta_hi))
    return qcos, qsin


def velocity_box(
    a: AircraftState, b: AircraftState, cb_a: ControlBounds, cb_b: ControlBounds
) -> VelocityBox:
    """Interval bounds on the reachable relative velocity of a pair.

    Each ground-velocity component expands into monomials q*cos(theta) and
    q*sin(theta) scaled by fixed nominal terms; the monomials are bounded by
    interval arithmetic and combined per component.  The result always
    contains the true reachable set and is tight whenever each monomial is
    monotone over the heading interval.
    """
    vx_lo = vx_hi = 0.0
    vy_lo = vy_hi = 0.0
    for state, cb, sign in ((a, cb_a, 1.0), (b, cb_b, -1.0)):
        qcos, qsin = _polar_component_intervals(cb)
        ch = state.speed * math.cos(state.heading)
        sh = state.speed * math.sin(state.heading)
        # vx gathers ch*qcos - sh*qsin, vy gathers sh*qcos + ch*qsin.
        for coef, interval, target in (
            (sign * ch, qcos, "x"),
            (-sign * sh, qsin, "x"),
            (sign * sh, qcos, "y"),
            (sign * ch, qsin, "y"),
        ):
            lo, hi = _interval_mul(coef, coef, *interval)
            if target == "x":
                vx_lo, vx_hi = vx_lo + lo, vx_hi + hi
            else:
                vy_lo, vy_hi = vy_lo + lo, vy_hi + hi
    return VelocityBox(vx_lo, vx_hi, vy_lo, vy_hi)


def _candidate_extreme_points(pg: PairGeometry) -> list[tuple[float, float]]:
    """Candidate extreme points of the box/conflict-wedge intersection.

    Thirteen candidates cover every vertex the intersection polytope can
    have: the four box corners, the crossings of each wedge boundary with
    each box edge, and the wedge apex at the origin.
    """
    box = pg.box
    pts = box.corners()
    for line in (pg.guard_low, pg.guard_high):
        a, b = line
        for vx in (box.vx_lo, box.vx_hi):
            if abs(b) > 1e-300:
                pts.append((vx, -a * vx / b))
        for vy in (box.vy_lo, box.vy_hi):
            if abs(a) > 1e-300:
                pts.append((-b * vy / a, vy))
    pts.append((0.0, 0.0))
    return pts


def classify_pair(pg: PairGeometry) -> PairClass:
    """Label a pair conflict-free, separable, or non-separable.

    Conflict-free: the velocity box misses the conflict wedge entirely,
    decided by enumerating candidate extreme points of their intersection.
    Non-separable: every box corner is a conflict, so the whole box sits
    inside the (convex) wedge.  Anything else is separable.
    """
    if pg.box is None:
        raise ValueError("classification needs a velocity box on the pair")
    scale = math.hypot(pg.box.vx_lo, pg.box.vy_lo) + math.hypot(pg.box.vx_hi, pg.box.vy_hi)
    tol = TOL_FEAS * max(1.0, scale)
    wedge_tol = tol * math.hypot(pg.rel_x, pg.rel_y) ** 2
    feasible = False
    for vx, vy in _candidate_extreme_points(pg):
        if not pg.box.contains(vx, vy, tol):
            continue
        if (
            pg.line_value(pg.guard_low, vx, vy) >= -wedge_tol
            and pg.line_value(pg.guard_high, vx, vy) <= wedge_tol
        ):
            feasible = True
            break
    if not feasible:
        return PairClass.CONFLICT_FREE
    if all(is_conflict(pg, vx, vy) for vx, vy in pg.box.corners()):
        return PairClass.NON_SEPARABLE
    return PairClass.SEPARABLE


@dataclass(frozen=True)
class PairPartition:
    """Classification of every aircraft pair of an instance."""

    pairs: tuple[tuple[int, int], ...]
    conflict_free: frozenset[tuple[int, int]]
    separable: frozenset[tuple[int, int]]
    non_separable: frozenset[tuple[int, int]]
    geometries: dict[tuple[int, int], PairGeometry]
    seconds: float = 0.0

    def __iter__(self):
        return iter((self.pairs, self.conflict_free, self.separable, self.non_separable))


def partition_pairs(
    aircraft: list[AircraftState],
    d: float,
    bounds: ControlBounds | list[ControlBounds],
) -> PairPartition:
    """Partition all index pairs i<j by conflict class.

    Raises InitialLossOfSeparation naming the offending pair when two
    aircraft start closer than ``d``.
    """
    start = time.perf_counter()
    if isinstance(bounds, ControlBounds):
        bounds = [bounds] * len(aircraft)
    pairs = []
    cf, sep, non = set(), set(), set()
    geoms: dict[tuple[int, int], PairGeometry] = {}
    for i in range(len(aircraft)):
        for j in range(i + 1, len(aircraft)):
            try:
                pg = relative_state(aircraft[i], aircraft[j], d, bounds[i], bounds[j])
            except InitialLossOfSeparation as exc:
                raise InitialLossOfSeparation(f"pair ({i}, {j}): {exc}") from exc
            pairs.append((i, j))
            geoms[(i, j)] = pg
            label = classify_pair(pg)
            {
                PairClass.CONFLICT_FREE: cf,
                PairClass.SEPARABLE: sep,
                PairClass.NON_SEPARABLE: non,
            }[label].add((i, j))
    return PairPartition(
        pairs=tuple(pairs),
        conflict_free=frozenset(cf),
        separable=frozenset(sep),
        non_separable=frozenset(non),
        geometries=geoms,
        seconds=time.perf_counter() - start,
    )


def relative_velocity(
    a: AircraftState, b: AircraftState, q_a: float, theta_a: float, q_b: float, theta_b: float
) -> tuple[float, float]:
    vax, vay = a.velocity(q_a, theta_a)
    vbx, vby = b.velocity(q_b, theta_b)
    return vax - vbx, vay - vby


def min_horizontal_distance(
    a: AircraftState,
    b: AircraftState,
    q_a: float = 1.0,
    theta_a: float = 0.0,
    q_b: float = 1.0,
    theta_b: float = 0.0,
) -> float:
    """Closed-form minimum pair distance over all future time.

    Under uniform motion the squared distance is a quadratic in time, so the
    minimum over t >= 0 is the quadratic vertex clamped to the horizon start.
    """
    rel_x, rel_y = a.x - b.x, a.y - b.y
    vx, vy = relative_velocity(a, b, q_a, theta_a, q_b, theta_b)
    v2 = vx * vx + vy * vy
    if v2 < TOL_V * TOL_V:
        return math.hypot(rel_x, rel_y)
    t = max(0.0, -(rel_x * vx + rel_y * vy) / v2)
    return math.hypot(rel_x + vx * t, rel_y + vy * t)


def min_distance_sampled(
    a: AircraftState,
    b: AircraftState,
    q_a: float = 1.0,
    theta_a: float = 0.0,
    q_b: float = 1.0,
    theta_b: float = 0.0,
    horizon: float = 2.0,
    dt: float = 1e-3,
) -> float:
    """Sampled fallback for the closed-form minimum distance.

    Walks the horizon in steps of ``dt`` hours and takes the exact quadratic
    minimum inside each step, so the answer matches the closed form for any
    positive step size; kept as an independent cross-check.
    """
    if dt <= 0 or horizon <= 0:
        raise ValueError("horizon and dt must be positive")
    rel_x, rel_y = a.x - b.x, a.y - b.y
    vx, vy = relative_velocity(a, b, q_a, theta_a, q_b, theta_b)
    v2 = vx * vx + vy * vy
    best = math.hypot(rel_x, rel_y)
    if v2 < TOL_V * TOL_V:
        return best
    t0 = 0.0
    while t0 < horizon:
        t1 = min(t0 + dt, horizon)
        t_star = -(rel_x * vx + rel_y * vy) / v2
        for t in (t0, t1, min(max(t_star, t0), t1)):
            best = min(best, math.hypot(rel_x + vx * t, rel_y + vy * t))
        t0 = t1
    return best


def _clip_polygon(poly: list[tuple[float, float]], a: float, b: float, c: float) -> list[tuple[float, float]]:
    """Clip a convex polygon to the half-plane a*x + b*y <= c."""
    out: list[tuple[float, float]] = []
    m = len(poly)
    for k in range(m):
        px, py = poly[k]
        qx, qy = poly[(k + 1) % m]
        pin = a * px + b * py <= c + 1e-12
        qin = a * qx + b * qy <= c + 1e-12
        if pin:
            out.append((px, py))
        if pin != qin:
            t = (c - a * px - b * py) / (a * (qx - px) + b * (qy - py))
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def _convex_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Monotone-chain hull, counter-clockwise without the repeated endpoint."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and (
                (chain[-1][0] - chain[-2][0]) * (p[1] - chain[-2][1])
                - (chain[-1][1] - chain[-2][1]) * (p[0] - chain[-2][0])
            ) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(reversed(pts))
    return lower[:-1] + upper[:-1]


def conflict_free_hull_cuts(pg: PairGeometry) -> list[tuple[float, float, float]]:
    """Rows a*vx + b*vy <= c valid for every conflict-free box velocity.

    The conflict-free subset of the velocity box is the union of the two
    branch regions; its convex hull is a polygon whose edges, minus the box
    faces themselves, are valid inequalities for any formulation of the
    disjunction.  They carve off the wedge's crossing of the box, which
    tightens relaxations where the branch binary is fractional.
    """
    box = pg.box
    if box is None:
        raise ValueError("hull cuts need a velocity box on the pair")
    poly = [(box.vx_lo, box.vy_lo), (box.vx_hi, box.vy_lo), (box.vx_hi, box.vy_hi), (box.vx_lo, box.vy_hi)]
    na, nb = pg.normal_line
    side1 = _clip_polygon(poly, na, nb, 0.0)
    if side1:
        side1 = _clip_polygon(side1, pg.guard_low[0], pg.guard_low[1], 0.0)
    side0 = _clip_polygon(poly, -na, -nb, 0.0)
    if side0:
        side0 = _clip_polygon(side0, -pg.guard_high[0], -pg.guard_high[1], 0.0)
    hull = _convex_hull(side1 + side0)
    if len(hull) < 3:
        return []
    span = max(box.vx_hi - box.vx_lo, box.vy_hi - box.vy_lo, 1e-9)
    cuts = []
    for k in range(len(hull)):
        px, py = hull[k]
        qx, qy = hull[(k + 1) % len(hull)]
        dx, dy = qx - px, qy - py
        norm = math.hypot(dx, dy)
        if norm < 1e-9 * span:
            continue
        a, b = dy / norm, -dx / norm
        c = a * px + b * py
        on_box_face = (
            abs(a - 1) < 1e-9 and abs(c - box.vx_hi) < 1e-7 * span
            or abs(a + 1) < 1e-9 and abs(c + box.vx_lo) < 1e-7 * span
            or abs(b - 1) < 1e-9 and abs(c - box.vy_hi) < 1e-7 * span
            or abs(b + 1) < 1e-9 and abs(c + box.vy_lo) < 1e-7 * span
        )
        if not on_box_face:
            cuts.append((a, b, c))
    return cuts


def count_nominal_conflicts(aircraft: list[AircraftState], part: PairPartition) -> int:
    """Separable pairs whose unchanged trajectories already conflict."""
    n = 0
    for (i, j) in part.separable:
        vx, vy = relative_velocity(aircraft[i], aircraft[j], 1.0, 0.0, 1.0, 0.0)
        if is_conflict(part.geometries[(i, j)], vx, vy):
            n += 1
    return n

"""Deterministic benchmark instance generators and the instance file format.

Four families: aircraft ringed around a circle aiming at its centre (cp),
the same with randomised speeds and jittered headings (rcp), two converging
streams anchored on the circle (fp), and a doubled stream crossing offset
diagonally (gp).  Generators are pure functions of their parameters and
seed; random draws use one spawned child stream per aircraft so instances
are bit-reproducible across platforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AircraftState, ControlBounds, InitialLossOfSeparation

DEFAULT_D = 5.0
DEFAULT_BOUNDS = ControlBounds(0.94, 1.03, -math.pi / 6, math.pi / 6)


class GenerationFailed(RuntimeError):
    """Random resampling failed to restore initial separation."""


class SchemaError(ValueError):
    """Instance JSON violates the expected schema."""


@dataclass(frozen=True)
class Instance:
    aircraft: tuple[AircraftState, ...]
    d: float
    bounds: ControlBounds
    family: str
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.aircraft)

    def check_separated(self) -> None:
        for i in range(self.n):
            for j in range(i + 1, self.n):
                a, b = self.aircraft[i], self.aircraft[j]
                if math.hypot(a.x - b.x, a.y - b.y) < self.d:
                    raise InitialLossOfSeparation(f"pair ({i}, {j}) starts too close")


def _heading_to_centre(angle: float) -> float:
    h = angle + math.pi
    h = math.remainder(h, 2 * math.pi)
    if h <= -math.pi:
        h += 2 * math.pi
    return h


def _wrap(h: float) -> float:
    h = math.remainder(h, 2 * math.pi)
    if h <= -math.pi:
        h += 2 * math.pi
    return h


def gen_cp(n: int, radius: float = 200.0, speed: float = 500.0, d: float = DEFAULT_D,
           bounds: ControlBounds = DEFAULT_BOUNDS) -> Instance:
    """Aircraft evenly spaced on a circle, all heading for the centre."""
    if n < 2:
        raise ValueError("need at least two aircraft")
    acs = []
    for k in range(n):
        ang = 2 * math.pi * k / n
        acs.append(
            AircraftState(radius * math.cos(ang), radius * math.sin(ang), speed, _heading_to_centre(ang))
        )
    inst = Instance(tuple(acs), d, bounds, "cp", meta={"n": n, "radius": radius, "speed": speed})
    inst.check_separated()
    return inst


def gen_rcp(n: int, seed: int, radius: float = 200.0,
            speed_range: tuple[float, float] = (486.0, 594.0),
            heading_jitter: float = math.pi / 6, d: float = DEFAULT_D,
            bounds: ControlBounds = DEFAULT_BOUNDS, max_resample: int = 10_000) -> Instance:
    """Circle layout with random speeds and jittered radial headings.

    Each aircraft draws from its own spawned random stream; an aircraft that
    would start closer than ``d`` to an earlier one is redrawn from its own
    stream, so results do not depend on evaluation order tricks.
    """
    if n < 2:
        raise ValueError("need at least two aircraft")
    children = np.random.SeedSequence(entropy=seed).spawn(n)
    acs: list[AircraftState] = []
    for k in range(n):
        rng = np.random.Generator(np.random.PCG64(children[k]))
        ang = 2 * math.pi * k / n
        x, y = radius * math.cos(ang), radius * math.sin(ang)
        base = _heading_to_centre(ang)
        for _ in range(max_resample):
            speed = float(rng.uniform(*speed_range))
            heading = _wrap(base + float(rng.uniform(-heading_jitter, heading_jitter)))
            cand = AircraftState(x, y, speed, heading)
            if all(math.hypot(cand.x - o.x, cand.y - o.y) >= d for o in acs):
                acs.append(cand)
                break
        else:
            raise GenerationFailed(f"aircraft {k} could not be placed after {max_resample} draws")
    inst = Instance(tuple(acs), d, bounds, "rcp", seed=seed, meta={"n": n, "radius": radius})
    inst.check_separated()
    return inst


def _stream_states(anchor_angle: float, n: int, spacing: float, radius: float, speed: float):
    """One stream anchored on the circle, successors spaced along the heading.

    The trailing aircraft sits on the circumference and the stream extends
    inward toward the crossing point, so later aircraft are closer to it.
    """
    ux, uy = math.cos(anchor_angle), math.sin(anchor_angle)
    heading = _heading_to_centre(anchor_angle)
    return [
        AircraftState((radius - spacing * k) * ux, (radius - spacing * k) * uy, speed, heading)
        for k in range(n)
    ]


def gen_fp(n_per_stream: int, alpha: float = math.pi / 6, spacing: float = 15.0,
           radius: float = 200.0, speed: float = 500.0, d: float = DEFAULT_D,
           bounds: ControlBounds = DEFAULT_BOUNDS, base_angle: float = 0.0,
           offset: tuple[float, float] = (0.0, 0.0), family: str = "fp") -> Instance:
    """Two streams crossing at the circle centre with opening angle alpha."""
    if n_per_stream < 2:
        raise ValueError("need at least two aircraft per stream")
    states = _stream_states(base_angle + alpha / 2, n_per_stream, spacing, radius, speed)
    states += _stream_states(base_angle - alpha / 2, n_per_stream, spacing, radius, speed)
    if offset != (0.0, 0.0):
        states = [
            AircraftState(s.x + offset[0], s.y + offset[1], s.speed, s.heading) for s in states
        ]
    inst = Instance(tuple(states), d, bounds, family,
                    meta={"n_per_stream": n_per_stream, "alpha": alpha, "spacing": spacing})
    inst.check_separated()
    return inst


def gen_gp(n_per_stream: int, alpha: float = math.pi / 2, offset_nm: float = 15.0,
           radius: float = 200.0, speed: float = 500.0, d: float = DEFAULT_D,
           bounds: ControlBounds = DEFAULT_BOUNDS) -> Instance:
    """Two crossing-stream units offset diagonally by ``offset_nm`` per axis.

    The streams open symmetric about the diagonal, so the second unit is the
    first translated by (offset_nm, offset_nm); with the default quarter-turn
    opening this staggers cross-unit crossings by two in-trail slots.
    """
    a = gen_fp(n_per_stream, alpha=alpha, radius=radius, speed=speed, d=d, bounds=bounds,
               base_angle=math.pi / 4)
    b = gen_fp(n_per_stream, alpha=alpha, radius=radius, speed=speed, d=d, bounds=bounds,
               base_angle=math.pi / 4, offset=(offset_nm, offset_nm))
    inst = Instance(a.aircraft + b.aircraft, d, bounds, "gp",
                    meta={"n_per_stream": n_per_stream, "alpha": alpha, "offset_nm": offset_nm})
    inst.check_separated()
    return inst


def assign_fls(inst: Instance, fl_count: int, seed: int) -> Instance:
    """Random base level per aircraft plus the adjacent reachable set.

    Levels run 1..fl_count; reachable sets are base plus immediate
    neighbours, clipped at the ends (levels do not wrap).
    """
    if fl_count < 1:
        raise ValueError("need at least one flight level")
    children = np.random.SeedSequence(entropy=seed).spawn(inst.n)
    acs = []
    for k, state in enumerate(inst.aircraft):
        rng = np.random.Generator(np.random.PCG64(children[k]))
        base = int(rng.integers(1, fl_count + 1))
        reachable = frozenset(l for l in (base - 1, base, base + 1) if 1 <= l <= fl_count)
        acs.append(AircraftState(state.x, state.y, state.speed, state.heading, base, reachable))
    meta = dict(inst.meta)
    meta["fl_count"] = fl_count
    meta["fl_seed"] = seed
    return Instance(tuple(acs), inst.d, inst.bounds, inst.family, inst.seed, meta)


_FAMILIES = {
    "cp": lambda n, seed, fl_count: gen_cp(n),
    "rcp": lambda n, seed, fl_count: gen_rcp(n, seed or 0),
    "fp": lambda n, seed, fl_count: gen_fp(n),
    "gp": lambda n, seed, fl_count: gen_gp(n),
}


def generate(family: str, n: int, seed: int | None = None, fl_count: int | None = None) -> Instance:
    """Uniform entry point used by the command line."""
    if family not in _FAMILIES:
        raise ValueError(f"unknown family {family!r}; pick one of {sorted(_FAMILIES)}")
    inst = _FAMILIES[family](n, seed, fl_count)
    if fl_count:
        inst = assign_fls(inst, fl_count, seed if seed is not None else 0)
    return inst


def _fmt(x: float) -> float:
    return float(f"{x:.17g}")


def to_json(inst: Instance) -> str:
    """Canonical instance JSON: fixed key order, 17-significant-digit floats."""
    doc = {
        "family": inst.family,
        "seed": inst.seed,
        "d_nm": _fmt(inst.d),
        "bounds": {
            "q": [_fmt(inst.bounds.q_lo), _fmt(inst.bounds.q_hi)],
            "theta_deg": [_fmt(math.degrees(inst.bounds.theta_lo)), _fmt(math.degrees(inst.bounds.theta_hi))],
        },
        "aircraft": [
            {
                "x": _fmt(a.x),
                "y": _fmt(a.y),
                "speed": _fmt(a.speed),
                "heading": _fmt(a.heading),
                "fl": a.fl,
                "fl_set": sorted(a.fl_set) if a.fl_set is not None else None,
            }
            for a in inst.aircraft
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def from_json(text: str) -> Instance:
    """Parse canonical instance JSON, rejecting unknown fields."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    allowed = {"family", "seed", "d_nm", "bounds", "aircraft"}
    if not isinstance(doc, dict) or set(doc) - allowed:
        raise SchemaError(f"unknown top-level fields: {sorted(set(doc) - allowed)}")
    for key in allowed:
        if key not in doc:
            raise SchemaError(f"missing field {key!r}")
    b = doc["bounds"]
    if set(b) != {"q", "theta_deg"}:
        raise SchemaError("bounds must have exactly the fields 'q' and 'theta_deg'")
    bounds = ControlBounds(b["q"][0], b["q"][1], math.radians(b["theta_deg"][0]), math.radians(b["theta_deg"][1]))
    acs = []
    for k, a in enumerate(doc["aircraft"]):
        if set(a) - {"x", "y", "speed", "heading", "fl", "fl_set"}:
            raise SchemaError(f"aircraft {k} carries unknown fields")
        fl_set = a.get("fl_set")
        acs.append(
            AircraftState(
                float(a["x"]), float(a["y"]), float(a["speed"]), float(a["heading"]),
                a.get("fl"), frozenset(fl_set) if fl_set is not None else None,
            )
        )
    return Instance(tuple(acs), float(doc["d_nm"]), bounds, str(doc["family"]), doc["seed"])


def save(inst: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(inst))


def load(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return from_json(fh.read())

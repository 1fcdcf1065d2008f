"""Deterministic SVG renderings of instances and solutions.

Two views: the plan view with initial positions and nominal versus resolved
trajectories, and the relative-velocity plane of one pair showing its
reachable box, the conflict wedge, the radial / normal / wedge-boundary
lines and the solution point.  Output is plain SVG text with fixed float
formatting, so identical inputs give identical bytes.
"""

from __future__ import annotations

import math

from .geometry import AircraftState, PairGeometry, relative_velocity

_W = 640.0
_H = 640.0
_MARGIN = 40.0


class UnknownPair(KeyError):
    """Requested pair is not part of the instance."""


def _fmt(x: float) -> str:
    out = f"{x:.4f}"
    return "0.0000" if out == "-0.0000" else out


class _Canvas:
    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        span = max(x_hi - x_lo, y_hi - y_lo, 1e-9)
        cx, cy = (x_lo + x_hi) / 2, (y_lo + y_hi) / 2
        self.scale = (_W - 2 * _MARGIN) / span
        self.cx, self.cy = cx, cy
        self.parts: list[str] = []

    def pt(self, x, y):
        return (
            _W / 2 + (x - self.cx) * self.scale,
            _H / 2 - (y - self.cy) * self.scale,
        )

    def line(self, x1, y1, x2, y2, color, width=1.0, dash=None):
        a, b = self.pt(x1, y1)
        c, d = self.pt(x2, y2)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(a)}" y1="{_fmt(b)}" x2="{_fmt(c)}" y2="{_fmt(d)}" '
            f'stroke="{color}" stroke-width="{_fmt(width)}"{extra} />'
        )

    def circle(self, x, y, r_px, color, fill="none"):
        a, b = self.pt(x, y)
        self.parts.append(
            f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{_fmt(r_px)}" stroke="{color}" fill="{fill}" />'
        )

    def polygon(self, pts, fill, opacity):
        coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in (self.pt(x, y) for x, y in pts))
        self.parts.append(f'<polygon points="{coords}" fill="{fill}" opacity="{_fmt(opacity)}" />')

    def text(self, x, y, s, size=11):
        a, b = self.pt(x, y)
        self.parts.append(f'<text x="{_fmt(a)}" y="{_fmt(b)}" font-size="{size}">{s}</text>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(_W)}" height="{int(_H)}" '
            f'viewBox="0 0 {int(_W)} {int(_H)}">\n<rect width="100%" height="100%" fill="white" />\n'
            f"{body}\n</svg>\n"
        )


def plot_trajectories(
    aircraft: list[AircraftState],
    controls: list[tuple[float, float]] | None = None,
    horizon: float = 0.5,
) -> str:
    """Plan view: dots at initial positions, nominal rays, resolved rays."""
    xs = [a.x for a in aircraft]
    ys = [a.y for a in aircraft]
    pad = 0.25 * max(max(xs) - min(xs), max(ys) - min(ys), 1.0)
    cv = _Canvas(min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad)
    for k, a in enumerate(aircraft):
        vx, vy = a.velocity()
        cv.line(a.x, a.y, a.x + vx * horizon, a.y + vy * horizon, "#cc2222", 1.2)
        if controls is not None:
            q, th = controls[k]
            wx, wy = a.velocity(q, th)
            cv.line(a.x, a.y, a.x + wx * horizon, a.y + wy * horizon, "#2266cc", 1.2, dash="4 3")
        cv.circle(a.x, a.y, 3.0, "black", fill="black")
        cv.text(a.x, a.y, str(k))
    return cv.render()


def plot_velocity_plane(
    aircraft: list[AircraftState],
    pg: PairGeometry,
    pair: tuple[int, int],
    controls: list[tuple[float, float]] | None = None,
) -> str:
    """Relative-velocity view of one pair.

    Shows the reachable box, the conflict wedge (shaded), the radial and
    normal lines, the wedge boundaries, and the nominal plus resolved
    relative velocities.
    """
    box = pg.box
    if box is None:
        raise ValueError("velocity-plane plot needs a pair with a box")
    i, j = pair
    pad = 0.35 * max(box.vx_hi - box.vx_lo, box.vy_hi - box.vy_lo, 1.0)
    x_lo, x_hi = box.vx_lo - pad, box.vx_hi + pad
    y_lo, y_hi = box.vy_lo - pad, box.vy_hi + pad
    cv = _Canvas(x_lo, x_hi, y_lo, y_hi)

    reach = 2.0 * max(abs(x_lo), abs(x_hi), abs(y_lo), abs(y_hi))
    # Conflict wedge: convex side of both guard lines, clipped to view.
    rays = []
    for line, keep_sign in ((pg.guard_low, 1.0), (pg.guard_high, -1.0)):
        a, b = line
        dx, dy = -b, a
        if pg.rel_x * dx + pg.rel_y * dy > 0:
            dx, dy = -dx, -dy
        rays.append((dx, dy))
        del keep_sign
    mid = (-pg.rel_x, -pg.rel_y)
    mn = math.hypot(*mid) or 1.0
    wedge = [
        (0.0, 0.0),
        (rays[0][0] * reach, rays[0][1] * reach),
        (mid[0] / mn * reach, mid[1] / mn * reach),
        (rays[1][0] * reach, rays[1][1] * reach),
    ]
    cv.polygon(wedge, "#dd4444", 0.25)
    for (a, b), color, dash in (
        (pg.radial_line, "#cc2222", None),
        (pg.normal_line, "#cc2222", "6 4"),
        (pg.guard_low, "#2244bb", "3 3"),
        (pg.guard_high, "#2244bb", "3 3"),
    ):
        dx, dy = -b, a
        n = math.hypot(dx, dy) or 1.0
        cv.line(-dx / n * reach, -dy / n * reach, dx / n * reach, dy / n * reach, color, 1.0, dash)
    cv.line(box.vx_lo, box.vy_lo, box.vx_hi, box.vy_lo, "black", 1.5)
    cv.line(box.vx_hi, box.vy_lo, box.vx_hi, box.vy_hi, "black", 1.5)
    cv.line(box.vx_hi, box.vy_hi, box.vx_lo, box.vy_hi, "black", 1.5)
    cv.line(box.vx_lo, box.vy_hi, box.vx_lo, box.vy_lo, "black", 1.5)

    nominal = relative_velocity(aircraft[i], aircraft[j], 1.0, 0.0, 1.0, 0.0)
    cv.circle(nominal[0], nominal[1], 4.0, "#cc2222", fill="#cc2222")
    if controls is not None:
        qi, ti = controls[i]
        qj, tj = controls[j]
        sol = relative_velocity(aircraft[i], aircraft[j], qi, ti, qj, tj)
        cv.circle(sol[0], sol[1], 4.0, "#2266cc", fill="#2266cc")
    cv.text(x_lo + 0.02 * (x_hi - x_lo), y_hi - 0.04 * (y_hi - y_lo), f"pair ({i},{j})")
    return cv.render()

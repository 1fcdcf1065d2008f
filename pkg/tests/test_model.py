"""Model containers and formulation builders."""

import math
import random

import numpy as np
import pytest

from deconflict.geometry import (
    AircraftState,
    ControlBounds,
    is_conflict,
    partition_pairs,
    relative_state,
    relative_velocity,
    satisfies_disjunction,
)
from deconflict.instances import gen_cp
from deconflict.model import (
    BINARY,
    DegenerateControl,
    MissingFLData,
    MixedIntegerModel,
    build_2d_disjunctive,
    build_2d_shadow,
    build_fl_model,
    lint_model,
    lp_dump,
    recover_controls,
    shadow_angles,
)

CB = ControlBounds(0.94, 1.03, -math.pi / 6, math.pi / 6)


def cp4_model(**kw):
    inst = gen_cp(4)
    part = partition_pairs(list(inst.aircraft), inst.d, CB)
    return build_2d_disjunctive(list(inst.aircraft), part, 0.5, CB, **kw), inst, part


def meanings(model, head):
    return [v for v in model.vars if v.meaning[0] == head]


class TestDisjunctiveBuilder:
    def test_variable_counts_cp4(self):
        m, inst, part = cp4_model()
        assert len(meanings(m, "delta_x")) == 4 and len(meanings(m, "delta_y")) == 4
        assert len(meanings(m, "vx")) == 6 and len(meanings(m, "vy")) == 6
        assert len(meanings(m, "z")) == 6
        assert all(v.kind == BINARY for v in meanings(m, "z"))
        lint_model(m)

    def test_objective_minimum_at_no_deviation(self):
        m, *_ = cp4_model()
        x = np.zeros(len(m.vars))
        for v in meanings(m, "delta_x"):
            x[v.idx] = 1.0
        assert m.objective_value(x) == pytest.approx(0.0, abs=1e-15)

    def test_objective_example_value(self):
        # One aircraft at (0.97, 0.1) with equal weights: frozen by direct
        # substitution into the deviation objective.
        m = MixedIntegerModel(tag="Disjunctive2D")
        from deconflict.model import _add_control_core

        _add_control_core(m, [AircraftState(0, 0, 500, 0.0)], [CB], 0.5)
        x = np.zeros(len(m.vars))
        x[m.by_meaning("delta_x", 0).idx] = 0.97
        x[m.by_meaning("delta_y", 0).idx] = 0.1
        assert m.objective_value(x) == pytest.approx(0.00545)

    def test_weight_validation(self):
        inst = gen_cp(4)
        part = partition_pairs(list(inst.aircraft), inst.d, CB)
        with pytest.raises(ValueError):
            build_2d_disjunctive(list(inst.aircraft), part, 1.0, CB)

    def test_motion_rows_match_true_kinematics(self):
        m, inst, part = cp4_model()
        rng = random.Random(4)
        for _ in range(50):
            x = np.zeros(len(m.vars))
            controls = []
            for i in range(4):
                q = rng.uniform(CB.q_lo, CB.q_hi)
                th = rng.uniform(CB.theta_lo, CB.theta_hi)
                controls.append((q, th))
                x[m.by_meaning("delta_x", i).idx] = q * math.cos(th)
                x[m.by_meaning("delta_y", i).idx] = q * math.sin(th)
            for (i, j) in m.meta["pairs"]:
                vx, vy = relative_velocity(
                    inst.aircraft[i], inst.aircraft[j], *controls[i], *controls[j]
                )
                x[m.by_meaning("vx", i, j).idx] = vx
                x[m.by_meaning("vy", i, j).idx] = vy
            for c in m.linear:
                if c.name.startswith("motion_"):
                    assert abs(c.value(x) - c.rhs) < 1e-8

    def test_relaxation_constraints_subset_of_full(self):
        # Any point feasible for the full model satisfies the relaxation.
        m_relax, inst, part = cp4_model(relax_speed=True)
        m_full, *_ = cp4_model(relax_speed=False)
        assert not m_relax.quad and len(m_full.quad) == 4
        rng = random.Random(8)
        for _ in range(30):
            x = np.zeros(len(m_full.vars))
            controls = []
            for i in range(4):
                q = rng.uniform(CB.q_lo, CB.q_hi)
                th = rng.uniform(CB.theta_lo, CB.theta_hi)
                controls.append((q, th))
                x[m_full.by_meaning("delta_x", i).idx] = q * math.cos(th)
                x[m_full.by_meaning("delta_y", i).idx] = q * math.sin(th)
            for (i, j) in m_full.meta["pairs"]:
                vx, vy = relative_velocity(inst.aircraft[i], inst.aircraft[j], *controls[i], *controls[j])
                x[m_full.by_meaning("vx", i, j).idx] = vx
                x[m_full.by_meaning("vy", i, j).idx] = vy
                pg = part.geometries[(i, j)]
                n_val = pg.line_value(pg.normal_line, vx, vy)
                z = 1.0 if (n_val <= 0 and pg.line_value(pg.guard_low, vx, vy) <= 0) else 0.0
                x[m_full.by_meaning("z", i, j).idx] = z
            if m_full.feasible(x, 1e-7):
                assert m_relax.feasible(x, 1e-7)


class TestShadowBuilder:
    def test_counts_four_binaries_per_pair(self):
        inst = gen_cp(4)
        part = partition_pairs(list(inst.aircraft), inst.d, CB)
        m = build_2d_shadow(list(inst.aircraft), part, 0.5, CB)
        assert len(meanings(m, "sigma")) == 4 * 6
        lint_model(m)

    def test_tangent_half_angle(self):
        # Tangent of a 30 NM sight line to a 5 NM disc: asin(1/6), verified
        # by checking the tangent line's distance to the origin equals d.
        pg = relative_state(AircraftState(30, 0, 500, math.pi), AircraftState(0, 0, 500, 0.0), 5)
        left, right = shadow_angles(pg)
        half = 0.5 * (left - right)
        assert half == pytest.approx(math.asin(1 / 6), abs=1e-12)
        for ang in (left, right):
            # Distance from origin to the line through (30, 0) at heading ang.
            px, py = 30.0, 0.0
            dist = abs(px * math.sin(ang) - py * math.cos(ang))
            assert dist == pytest.approx(5.0, abs=1e-9)

    def test_sign_row_big_m_is_box_extent(self):
        a = AircraftState(30, 0, 500, math.pi)
        b = AircraftState(0, 0, 500, 0.0)
        part = partition_pairs([a, b], 5.0, CB)
        m = build_2d_shadow([a, b], part, 0.5, CB)
        pg = part.geometries[(0, 1)]
        box = pg.box
        want = max(abs(box.vx_lo), abs(box.vx_hi))
        got = [
            ic.big_m
            for ic in m.indicators
            if ic.constraint.name.startswith("shadow1_div")
        ]
        assert got and got[0] == pytest.approx(want, rel=1e-12)

    def test_shadow_regions_equal_disjunction(self):
        # Cross-formulation equivalence at the feasibility level.
        rng = random.Random(17)
        checked = 0
        while checked < 10_000:
            d = rng.uniform(1, 10)
            rx, ry = rng.uniform(-120, 120), rng.uniform(-120, 120)
            if rx * rx + ry * ry <= d * d * 1.21:
                continue
            pg = relative_state(AircraftState(rx, ry, 500, 0.0), AircraftState(0, 0, 500, 0.0), d)
            vx, vy = rng.uniform(-700, 700), rng.uniform(-700, 700)
            scale = math.hypot(rx, ry) * math.hypot(vx, vy) + 1.0
            left, right = shadow_angles(pg)
            half = 0.5 * (left - right)
            alpha = math.atan2(-ry, -rx) - math.pi
            ux, uy = math.cos(alpha), math.sin(alpha)
            wx, wy = -math.sin(alpha), math.cos(alpha)
            vxr = ux * vx + uy * vy
            vyr = wx * vx + wy * vy
            t = math.tan(half)
            regions = [
                vxr >= 0 and vyr >= 0,
                vxr >= 0 and vyr <= 0,
                vxr <= 0 and vyr <= vxr * t,
                vxr <= 0 and vyr >= -vxr * t,
            ]
            margin = 1e-6 * scale
            boundary = (
                abs(vxr) < margin
                or abs(vyr) < margin
                or abs(vyr - vxr * t) < margin
                or abs(vyr + vxr * t) < margin
            )
            if boundary:
                continue
            assert any(regions) == satisfies_disjunction(pg, vx, vy) == (not is_conflict(pg, vx, vy))
            checked += 1


class TestFlModel:
    def build(self):
        acs = [
            AircraftState(0, 0, 500, 0.0, 3, frozenset({2, 3, 4})),
            AircraftState(60, 0, 500, math.pi, 3, frozenset({2, 3, 4})),
            AircraftState(0, 300, 500, 0.0, 2, frozenset({1, 2, 3})),
        ]
        part = partition_pairs(acs, 5.0, CB)
        return build_fl_model(acs, part, 0.5, CB), acs, part

    def test_assignment_row_per_aircraft(self):
        m, acs, _ = self.build()
        rows = [c for c in m.linear if c.name.startswith("fl_assign")]
        assert len(rows) == 3
        assert all(len(c.coeffs) == 3 and c.sense == "==" for c in rows)
        lint_model(m)

    def test_sharing_forced_when_same_level(self):
        m, *_ = self.build()
        x = np.zeros(len(m.vars))
        x[m.by_meaning("rho", 0, 3).idx] = 1.0
        x[m.by_meaning("rho", 1, 3).idx] = 1.0
        x[m.by_meaning("phi", 0, 1).idx] = 0.0
        share = [c for c in m.linear if c.name == "fl_share[0,1,3]"]
        assert share and not share[0].satisfied(x)
        x[m.by_meaning("phi", 0, 1).idx] = 1.0
        assert share[0].satisfied(x)

    def test_separation_inactive_without_sharing(self):
        # With the sharing binary off, every gated separation row must hold
        # for any velocity in the box (the fold-in big-M absorbs it).
        m, acs, part = self.build()
        rng = random.Random(5)
        pair_rows = [
            ic for ic in m.indicators if ic.constraint.name.startswith("sep_") and "[0,1]" in ic.constraint.name
        ]
        assert pair_rows
        box = part.geometries[(0, 1)].box
        for _ in range(200):
            x = np.zeros(len(m.vars))
            x[m.by_meaning("phi", 0, 1).idx] = 0.0
            vx = rng.uniform(box.vx_lo, box.vx_hi)
            vy = rng.uniform(box.vy_lo, box.vy_hi)
            x[m.by_meaning("vx", 0, 1).idx] = vx
            x[m.by_meaning("vy", 0, 1).idx] = vy
            for ic in pair_rows:
                x[ic.binary] = ic.active_value
                assert ic.constraint.satisfied(x, 1e-9)

    def test_missing_levels_rejected(self):
        acs = [AircraftState(0, 0, 500, 0.0), AircraftState(60, 0, 500, math.pi)]
        part = partition_pairs(acs, 5.0, CB)
        with pytest.raises(MissingFLData):
            build_fl_model(acs, part, 0.5, CB)


class TestRecoverControls:
    def test_identity(self):
        assert recover_controls(1.0, 0.0) == (1.0, 0.0)

    def test_polar_round_trip_example(self):
        q, th = recover_controls(0.94 * math.cos(math.pi / 6), 0.94 * math.sin(math.pi / 6))
        assert q == pytest.approx(0.94)
        assert th == pytest.approx(math.pi / 6)

    def test_random_round_trip(self):
        rng = random.Random(6)
        for _ in range(500):
            q = rng.uniform(CB.q_lo, CB.q_hi)
            th = rng.uniform(CB.theta_lo, CB.theta_hi)
            q2, th2 = recover_controls(q * math.cos(th), q * math.sin(th))
            assert abs(q2 - q) < 1e-12 and abs(th2 - th) < 1e-12

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateControl):
            recover_controls(0.0, 0.0)


class TestLintAndDump:
    def test_duplicate_meaning_detected(self):
        m = MixedIntegerModel(tag="Disjunctive2D")
        m.add_var("continuous", 0, 1, ("delta_x", 0))
        m.add_var("continuous", 0, 1, ("delta_x", 0))
        with pytest.raises(ValueError, match="duplicate"):
            lint_model(m)

    def test_unknown_reference_detected(self):
        from deconflict.model import LinearConstraint

        m = MixedIntegerModel(tag="Disjunctive2D")
        m.add_var("continuous", 0, 1, ("delta_x", 0))
        m.linear.append(LinearConstraint({5: 1.0}, "<=", 0.0, "bad"))
        with pytest.raises(ValueError, match="unknown"):
            lint_model(m)

    def test_dump_is_deterministic_and_complete(self):
        m, *_ = cp4_model()
        d1, d2 = lp_dump(m), lp_dump(m)
        assert d1 == d2
        assert "minimize:" in d1 and "subject to:" in d1 and "binaries:" in d1
        assert "z(0,1)" in d1 and "motion_x[0,1]" in d1
        assert d1.count("\n") == len(d1.splitlines())

    def test_dump_differs_between_formulations(self):
        inst = gen_cp(4)
        part = partition_pairs(list(inst.aircraft), inst.d, CB)
        d = lp_dump(build_2d_disjunctive(list(inst.aircraft), part, 0.5, CB))
        s = lp_dump(build_2d_shadow(list(inst.aircraft), part, 0.5, CB))
        assert "sigma" in s and "sigma" not in d

"""Active-set QP solver: closed forms, KKT accuracy, brute-force oracle."""

import itertools

import numpy as np
import pytest

from deconflict.qp import QpInfeasible, QpProblem, solve_qp


def brute_force_qp(q, c, g, h):
    """Enumerate working sets, solve each KKT system, keep the best point.

    Independent oracle: every candidate optimum of a convex QP is the
    solution of the KKT system of some subset of active constraints with
    non-negative multipliers and primal feasibility.
    """
    n = c.size
    m = g.shape[0]
    best = None
    for r in range(0, min(n, m) + 1):
        for subset in itertools.combinations(range(m), r):
            rows = g[list(subset)]
            kkt = np.block([[q, rows.T], [rows, np.zeros((r, r))]])
            rhs = np.concatenate([-c, h[list(subset)]])
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            if np.linalg.norm(kkt @ sol - rhs) > 1e-7:
                continue
            x, mult = sol[:n], sol[n:]
            if (g @ x - h > 1e-7).any() or (mult < -1e-7).any():
                continue
            val = 0.5 * x @ q @ x + c @ x
            if best is None or val < best[0] - 1e-12:
                best = (val, x)
    return best


class TestClosedForms:
    def test_clamped_parabola(self):
        qp = QpProblem.build(q=[[2.0]], c=[-2.0], ub=[0.5])
        res = solve_qp(qp)
        assert res.x[0] == pytest.approx(0.5)
        assert res.obj + 1.0 == pytest.approx(0.25)  # objective constant added back
        assert res.kkt_residual < 1e-8

    def test_symmetric_projection(self):
        qp = QpProblem.build(q=2 * np.eye(2), c=[0, 0], a_ub=[[-1, -1]], b_ub=[-2])
        res = solve_qp(qp)
        assert res.x == pytest.approx([1.0, 1.0])
        assert res.obj == pytest.approx(2.0)

    def test_pure_lp(self):
        qp = QpProblem.build(q=None, c=[-1, -2], a_ub=[[1, 1]], b_ub=[4], lb=[0, 0], ub=[3, 2])
        res = solve_qp(qp)
        assert res.obj == pytest.approx(-6.0)

    def test_equality_constrained(self):
        qp = QpProblem.build(q=2 * np.eye(3), c=[0, 0, 0], a_eq=[[1, 1, 1]], b_eq=[3])
        res = solve_qp(qp)
        assert res.x == pytest.approx([1, 1, 1])

    def test_infeasible_reports_witness(self):
        qp = QpProblem.build(q=np.eye(1), c=[0], a_ub=[[1], [-1]], b_ub=[-1, -1])
        with pytest.raises(QpInfeasible) as err:
            solve_qp(qp)
        assert err.value.violations


class TestRandomOracle:
    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(7)
        disagreements = 0
        for _ in range(250):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 7))
            factor = rng.normal(size=(n, n))
            q = factor @ factor.T
            if rng.random() < 0.25:
                q = np.zeros((n, n))
            elif rng.random() < 0.5:
                q[rng.integers(0, n)] *= 0.0  # singular direction
                q = 0.5 * (q + q.T)
                q += np.eye(n) * 0.0
            c = rng.normal(size=n)
            a_ub = rng.normal(size=(m, n))
            b_ub = rng.normal(size=m) + 1.0
            lb, ub = -5 * np.ones(n), 5 * np.ones(n)
            g = np.vstack([a_ub, np.eye(n), -np.eye(n)])
            h = np.concatenate([b_ub, ub, -lb])
            want = brute_force_qp(0.5 * (q + q.T), c, g, h)
            qp = QpProblem.build(q=q, c=c, a_ub=a_ub, b_ub=b_ub, lb=lb, ub=ub)
            try:
                res = solve_qp(qp)
                got = res.obj
            except QpInfeasible:
                got = None
            if want is None:
                disagreements += got is not None
            else:
                ok = got is not None and abs(got - want[0]) <= 1e-6 * max(1, abs(want[0]))
                ok = ok and res.kkt_residual <= 1e-8
                disagreements += not ok
        assert disagreements == 0

    def test_determinism(self):
        rng = np.random.default_rng(3)
        n, m = 6, 10
        factor = rng.normal(size=(n, n))
        q = factor @ factor.T
        c = rng.normal(size=n)
        a_ub = rng.normal(size=(m, n))
        b_ub = rng.normal(size=m) + 0.5
        qp = QpProblem.build(q=q, c=c, a_ub=a_ub, b_ub=b_ub, lb=-3 * np.ones(n), ub=3 * np.ones(n))
        r1 = solve_qp(qp)
        r2 = solve_qp(qp)
        assert (r1.x == r2.x).all()
        assert r1.obj == r2.obj

    def test_warm_start_same_answer(self):
        qp = QpProblem.build(q=2 * np.eye(2), c=[-2, 0], a_ub=[[1, 1]], b_ub=[1.5], lb=[0, 0], ub=[2, 2])
        cold = solve_qp(qp)
        warm = solve_qp(qp, warm_start=np.array([0.2, 0.1]))
        assert warm.obj == pytest.approx(cold.obj, abs=1e-10)

    def test_vacuous_zero_rows_are_dropped(self):
        qp = QpProblem.build(q=2 * np.eye(1), c=[-2.0], a_ub=[[0.0]], b_ub=[1.0], lb=[0], ub=[5])
        res = solve_qp(qp)
        assert res.x[0] == pytest.approx(1.0)

    def test_contradictory_zero_row_infeasible(self):
        qp = QpProblem.build(q=2 * np.eye(1), c=[0.0], a_ub=[[0.0]], b_ub=[-1.0], lb=[0], ub=[5])
        with pytest.raises(QpInfeasible):
            solve_qp(qp)

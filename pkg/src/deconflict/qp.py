"""Dense primal active-set solver for convex quadratic programs.

Solves  min 0.5 x'Qx + c'x  subject to  A x = b,  G x <= h,  lb <= x <= ub
with Q positive semidefinite (possibly zero, so plain LPs work too).  Node
problems in this package are small and dense, and branch-and-bound needs
high-accuracy, bit-reproducible answers, which favours an exact active-set
method over iterative schemes.

A feasible start comes from a phase-1 LP (scipy HiGHS).  Each iteration
solves the equality-constrained subproblem on the working set through an
SVD nullspace basis, which copes with singular reduced Hessians: curvature
directions take a Newton step, zero-curvature descent follows the projected
gradient until a constraint blocks.  Constraint drops use the most negative
multiplier early and Bland's smallest-index rule later to rule out cycling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.optimize import linprog

_FEAS_TOL = 1e-9
_STEP_TOL = 1e-11
_MULT_TOL = 1e-9
_CURV_TOL = 1e-10


class QpInfeasible(Exception):
    """Constraint system admits no point; carries a violation witness."""

    def __init__(self, violations):
        self.violations = violations
        detail = ", ".join(f"{kind}[{idx}] by {v:.3e}" for kind, idx, v in violations[:5])
        super().__init__(f"infeasible constraint system ({detail or 'no witness'})")


class QpMaxIterations(Exception):
    """Active-set loop failed to converge within the iteration budget."""


@dataclass
class QpProblem:
    """Convex QP data; arrays may be empty but never None."""

    q: np.ndarray
    c: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @classmethod
    def build(cls, q, c, a_eq=None, b_eq=None, a_ub=None, b_ub=None, lb=None, ub=None):
        c = np.asarray(c, dtype=float)
        n = c.size
        q = np.zeros((n, n)) if q is None else np.asarray(q, dtype=float)
        a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float).reshape(-1, n)
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
        a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float).reshape(-1, n)
        b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
        lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        return cls(q, c, a_eq, b_eq, a_ub, b_ub, lb, ub)

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class QpResult:
    x: np.ndarray
    obj: float
    eq_mult: np.ndarray
    ub_mult: np.ndarray          # one entry per inequality row (0 if inactive)
    bound_mult: np.ndarray       # signed; >0 pushes at upper bound, <0 at lower
    active: tuple[int, ...]      # active inequality rows
    iterations: int
    kkt_residual: float = math.nan


def _stack_inequalities(qp: QpProblem):
    """Inequality rows plus finite bounds as one G x <= h system.

    Returns (G, h, kinds) where kinds[i] is ('row', j), ('ub', j) or
    ('lb', j) describing the origin of stacked row i.
    """
    n = qp.n
    rows = [qp.a_ub]
    rhs = [qp.b_ub]
    kinds = [("row", j) for j in range(qp.a_ub.shape[0])]
    ub_rows, ub_rhs = [], []
    for j in range(n):
        if np.isfinite(qp.ub[j]):
            e = np.zeros(n)
            e[j] = 1.0
            ub_rows.append(e)
            ub_rhs.append(qp.ub[j])
            kinds.append(("ub", j))
        if np.isfinite(qp.lb[j]):
            e = np.zeros(n)
            e[j] = -1.0
            ub_rows.append(e)
            ub_rhs.append(-qp.lb[j])
            kinds.append(("lb", j))
    if ub_rows:
        rows.append(np.array(ub_rows))
        rhs.append(np.array(ub_rhs))
    g = np.vstack(rows) if rows else np.zeros((0, n))
    h = np.concatenate(rhs) if rhs else np.zeros(0)
    return g, h, kinds


def _phase1_point(qp: QpProblem) -> np.ndarray:
    """Feasible point via HiGHS, or raise QpInfeasible with a witness.

    The LP reuses the QP's linear objective so the starting vertex already
    leans toward the optimum, which keeps active-set iteration counts low.
    """
    n = qp.n
    res = linprog(
        qp.c,
        A_ub=qp.a_ub if qp.a_ub.size else None,
        b_ub=qp.b_ub if qp.b_ub.size else None,
        A_eq=qp.a_eq if qp.a_eq.size else None,
        b_eq=qp.b_eq if qp.b_eq.size else None,
        bounds=list(zip(qp.lb, qp.ub)),
        method="highs",
    )
    if res.status == 0:
        return np.asarray(res.x, dtype=float)
    # Witness: minimise total violation with elastic slacks on every row.
    me, mi = qp.a_eq.shape[0], qp.a_ub.shape[0]
    cols = n + mi + 2 * me
    cost = np.concatenate([np.zeros(n), np.ones(mi + 2 * me)])
    a_ub = None
    b_ub = None
    if mi:
        a_ub = np.hstack([qp.a_ub, -np.eye(mi), np.zeros((mi, 2 * me))])
        b_ub = qp.b_ub
    a_eq = None
    b_eq = None
    if me:
        a_eq = np.hstack([qp.a_eq, np.zeros((me, mi)), np.eye(me), -np.eye(me)])
        b_eq = qp.b_eq
    bounds = list(zip(qp.lb, qp.ub)) + [(0, None)] * (mi + 2 * me)
    relaxed = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    violations = []
    if relaxed.status == 0:
        slack = relaxed.x[n:]
        for j in range(mi):
            if slack[j] > 1e-9:
                violations.append(("ineq", j, float(slack[j])))
        for j in range(me):
            v = slack[mi + j] + slack[mi + me + j]
            if v > 1e-9:
                violations.append(("eq", j, float(v)))
    else:
        violations.append(("bounds", -1, math.inf))
    del cols
    raise QpInfeasible(violations)


def solve_qp(qp: QpProblem, warm_start: np.ndarray | None = None, max_iter: int | None = None) -> QpResult:
    """Minimise the convex QP; raises QpInfeasible / QpMaxIterations.

    The returned point satisfies the KKT system to within ``kkt_residual``
    (stationarity, primal and dual feasibility, complementarity), computed on
    the original unscaled data.  Identical inputs produce identical outputs.
    """
    n = qp.n
    q = 0.5 * (qp.q + qp.q.T)
    g_raw, h_raw, kinds = _stack_inequalities(qp)
    a_raw = qp.a_eq

    # Rows with a vanishing normal are either vacuous or a contradiction;
    # they must not survive into the scaled system.
    if g_raw.size:
        norms0 = np.linalg.norm(g_raw, axis=1)
        trivial = norms0 <= 1e-13 * max(1.0, float(norms0.max()))
        if trivial.any():
            bad = [int(i) for i in np.nonzero(trivial)[0] if h_raw[i] < -1e-9]
            if bad:
                raise QpInfeasible([("zero-row", kinds[i][1], float(-h_raw[i])) for i in bad])
            keep_rows = ~trivial
            g_raw = g_raw[keep_rows]
            h_raw = h_raw[keep_rows]
            kinds = [k for k, keep in zip(kinds, keep_rows) if keep]

    # Row scaling keeps the working-set algebra well conditioned.
    def scaled(mat, rhs):
        if not mat.size:
            return mat.copy(), rhs.copy(), np.ones(mat.shape[0])
        norms = np.maximum(np.linalg.norm(mat, axis=1), 1e-12)
        return mat / norms[:, None], rhs / norms, norms

    g, h, g_norms = scaled(g_raw, h_raw)
    a, b, a_norms = scaled(a_raw, qp.b_eq)
    m = g.shape[0]

    scale = max(1.0, float(np.abs(h).max()) if h.size else 1.0, float(np.abs(b).max()) if b.size else 1.0)
    feas_tol = _FEAS_TOL * scale

    x = None
    if warm_start is not None and warm_start.shape == (n,):
        cand = np.asarray(warm_start, dtype=float)
        ok = True
        if g.size and (g @ cand - h > feas_tol).any():
            ok = False
        if a.size and (np.abs(a @ cand - b) > feas_tol).any():
            ok = False
        if ok:
            x = cand
    if x is None:
        x = _phase1_point(qp)

    me = a.shape[0]
    # Equality rows are permanent working-set members; cache their nullspace.
    if me:
        qe, re_ = sla.qr(a.T, mode="full")
        diag = np.abs(np.diag(re_)) if re_.size else np.zeros(0)
        rank_e = int((diag > 1e-12 * max(1.0, diag[0] if diag.size else 1.0)).sum())
        z_eq = qe[:, rank_e:]
        re_tri = re_[:rank_e, :rank_e]
        qe_lead = qe[:, :rank_e]
    else:
        z_eq = np.eye(n)
        rank_e = 0

    k0 = z_eq.shape[1]
    gz_eq = g @ z_eq if m else np.zeros((0, k0))   # rows projected onto eq-null

    working: list[int] = []
    if m and k0 > 0:
        tight = np.nonzero(g @ x - h > -feas_tol)[0]
        if tight.size:
            mt = gz_eq[tight]
            _, rt, piv = sla.qr(mt.T, mode="economic", pivoting=True)
            diag = np.abs(np.diag(rt)) if rt.size else np.zeros(0)
            rk = int((diag > 1e-10 * max(1.0, diag[0] if diag.size else 1.0)).sum())
            working = sorted(int(tight[piv[j]]) for j in range(min(rk, k0)))
    in_working = np.zeros(m, dtype=bool)
    in_working[working] = True

    limit = max_iter if max_iter is not None else 100 + 20 * (n + m)
    bland_after = 3 * (n + m)

    for it in range(limit):
        grad = q @ x + qp.c
        nw = len(working)
        if nw:
            mw = gz_eq[working]                      # (nw, k0)
            qw, rw = sla.qr(mw.T, mode="full")     # mw.T: (k0, nw)
            diag = np.abs(np.diag(rw)) if rw.size else np.zeros(0)
            rank_w = int((diag > 1e-10 * max(1.0, diag[0] if diag.size else 1.0)).sum())
            if rank_w < nw:
                # Dependent row slipped in through degeneracy: drop it.
                working.pop()
                in_working = np.zeros(m, dtype=bool)
                in_working[working] = True
                continue
            z = z_eq @ qw[:, rank_w:]
        else:
            qw = rw = None
            z = z_eq

        k = z.shape[1]
        if k == 0:
            p = np.zeros(n)
            newton = True
        else:
            gz = z.T @ grad
            hz = z.T @ (q @ z)
            lam, vec = np.linalg.eigh(hz)
            lam_max = max(float(lam[-1]), 0.0) if lam.size else 0.0
            curv_tol = _CURV_TOL * max(1.0, lam_max)
            comp = vec.T @ gz
            null_mask = lam <= curv_tol
            null_grad = np.where(null_mask, comp, 0.0)
            if np.linalg.norm(null_grad) > 1e-9 * max(1.0, np.linalg.norm(gz)):
                p = z @ -(vec @ null_grad)
                newton = False
            else:
                pz = np.zeros_like(gz)
                pos = ~null_mask
                if pos.any():
                    pz = -(vec[:, pos] @ (comp[pos] / lam[pos]))
                p = z @ pz
                newton = True

        if np.linalg.norm(p) <= _STEP_TOL * max(1.0, np.linalg.norm(x)):
            # Stationary on the working set: check multiplier signs.
            mult = np.zeros(me + nw)
            rhs = -grad
            if nw:
                proj = z_eq.T @ rhs
                y = qw.T @ proj
                w_mult = sla.solve_triangular(rw[:nw, :nw], y[:nw])
                mult[me:] = w_mult
                rhs = rhs - g[working].T @ w_mult
            else:
                w_mult = np.zeros(0)
            if me:
                mult[:me][:rank_e] = sla.solve_triangular(re_tri, qe_lead.T @ rhs)
            mscale = max(1.0, float(np.abs(mult).max()) if mult.size else 1.0)
            neg = [kk for kk in range(nw) if w_mult[kk] < -_MULT_TOL * mscale]
            if not neg:
                return _finish(qp, x, working, kinds, g_norms, a_norms, mult, me, it, g_raw, h_raw)
            if it > bland_after:
                drop = min(neg, key=lambda kk: working[kk])
            else:
                drop = min(neg, key=lambda kk: (w_mult[kk], working[kk]))
            in_working[working[drop]] = False
            working.pop(drop)
            continue

        # Longest feasible step along p (vectorised ratio test).
        alpha = 1.0 if newton else np.inf
        block = -1
        if m:
            gp = g @ p
            cand_mask = (~in_working) & (gp > 1e-12)
            if cand_mask.any():
                idx = np.nonzero(cand_mask)[0]
                ratios = np.maximum(h[idx] - g[idx] @ x, 0.0) / gp[idx]
                jmin = int(np.argmin(ratios))
                if ratios[jmin] < alpha - 1e-15:
                    alpha = float(ratios[jmin])
                    block = int(idx[jmin])
        if not math.isfinite(alpha):
            raise QpMaxIterations("descent direction is unbounded; problem lacks finite optimum")
        x = x + alpha * p
        if block >= 0 and (not newton or alpha < 1.0 - 1e-12):
            working.append(block)
            working.sort()
            in_working[block] = True
    raise QpMaxIterations(f"active-set loop exceeded {limit} iterations")


def _finish(qp, x, working, kinds, g_norms, a_norms, mult, ne, iterations, g_raw, h_raw):
    n = qp.n
    eq_mult = np.zeros(qp.a_eq.shape[0])
    if ne:
        eq_mult = mult[:ne] / a_norms
    ub_mult = np.zeros(qp.a_ub.shape[0])
    bound_mult = np.zeros(n)
    active_rows = []
    for k, i in enumerate(working):
        val = mult[ne + k] / g_norms[i]
        kind, j = kinds[i]
        if kind == "row":
            ub_mult[j] = max(val, 0.0)
            active_rows.append(j)
        elif kind == "ub":
            bound_mult[j] += max(val, 0.0)
        else:
            bound_mult[j] -= max(val, 0.0)

    grad = 0.5 * (qp.q + qp.q.T) @ x + qp.c
    stat = grad.copy()
    if qp.a_eq.size:
        stat += qp.a_eq.T @ eq_mult
    if qp.a_ub.size:
        stat += qp.a_ub.T @ ub_mult
    stat += bound_mult
    res = float(np.linalg.norm(stat, np.inf))
    if qp.a_eq.size:
        res = max(res, float(np.abs(qp.a_eq @ x - qp.b_eq).max()))
    if qp.a_ub.size:
        viol = qp.a_ub @ x - qp.b_ub
        res = max(res, float(np.maximum(viol, 0.0).max()))
        res = max(res, float(np.abs(ub_mult * viol).max()))
    res = max(res, float(np.maximum(x - qp.ub, 0.0)[np.isfinite(qp.ub)].max(initial=0.0)))
    res = max(res, float(np.maximum(qp.lb - x, 0.0)[np.isfinite(qp.lb)].max(initial=0.0)))
    obj = float(0.5 * x @ qp.q @ x + qp.c @ x)
    return QpResult(
        x=x,
        obj=obj,
        eq_mult=eq_mult,
        ub_mult=ub_mult,
        bound_mult=bound_mult,
        active=tuple(sorted(active_rows)),
        iterations=iterations,
        kkt_residual=res,
    )

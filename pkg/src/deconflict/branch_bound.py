"""Branch-and-bound over the binaries of a mixed-integer model.

Node relaxations are linearly-constrained convex QPs.  Three compilations
shrink them: relative-velocity variables defined by motion equalities are
substituted out; indicator constraints become big-M rows; and any binary
that appears only as the gate of its own indicator rows is projected out of
the continuous relaxation altogether (Fourier-Motzkin over its big-M rows),
so branching on it swaps precomputed hard-row blocks instead of carrying a
column.  Convex quadratic rows are enforced lazily by outer-approximation
cuts valid at every node.

The search is deterministic: single worker, best-bound selection with
depth-first plunging until the first incumbent, branch choice by deepest
disjunction violation with smallest-index tie-breaks, most-fractional for
binaries that still live in the QP.  Binaries carry no objective weight in
the models built here, which a rounding probe exploits to turn relaxation
points into incumbents without extra solves.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import BINARY, LinearConstraint, MixedIntegerModel
from .qp import QpInfeasible, QpMaxIterations, QpProblem, solve_qp

INT_TOL = 1e-6
QUAD_TOL = 1e-6
_OA_ROUNDS = 60
FREE = -1


@dataclass
class BnBParams:
    eps: float = 0.01
    time_limit: float = 600.0
    max_nodes: int = 2_000_000
    events: list | None = None


@dataclass
class BnBResult:
    status: str                  # optimal | infeasible | timeout | node_limit
    lb: float
    ub: float
    x: np.ndarray | None         # full model-space point of the incumbent
    gap: float
    nodes: int
    wall_time: float

    def binary_value(self, model: MixedIntegerModel, *meaning) -> int:
        return int(round(self.x[model.by_meaning(*meaning).idx]))


@dataclass
class _Quad:
    qmat: dict[tuple[int, int], float]   # over compiled indices
    lin: np.ndarray
    rhs: float
    name: str

    def value(self, x) -> float:
        v = float(self.lin @ x)
        return v + sum(c * x[i] * x[j] for (i, j), c in self.qmat.items())

    def oa_cut(self, x) -> tuple[np.ndarray, float]:
        """Supporting hyperplane of {value <= rhs} at the point x.

        Linearising q0(y) + l.y at x gives grad.y <= rhs + q0(x) because the
        pure quadratic part is homogeneous of degree two.
        """
        grad = self.lin.copy()
        quad_val = 0.0
        for (i, j), c in self.qmat.items():
            grad[i] += c * x[j]
            grad[j] += c * x[i]
            quad_val += c * x[i] * x[j]
        return grad, self.rhs + quad_val


@dataclass
class _ProjBlock:
    """Row blocks of one projected binary, dense over compiled variables."""

    model_idx: int
    one_rows: np.ndarray      # hard rows when the binary is 1
    one_rhs: np.ndarray
    zero_rows: np.ndarray     # hard rows when the binary is 0
    zero_rhs: np.ndarray
    free_rows: np.ndarray     # valid while undecided (pairwise combinations)
    free_rhs: np.ndarray
    norm_one: np.ndarray      # row norms for violation scoring
    norm_zero: np.ndarray


@dataclass
class Compiled:
    model: MixedIntegerModel
    keep: list[int]
    pos: dict[int, int]
    q: np.ndarray
    c: np.ndarray
    const: float
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binaries: list[int]                   # compiled idx of in-QP binaries
    quads: list[_Quad]
    eliminated: dict[int, tuple[dict[int, float], float]]
    blocks: list[_ProjBlock]
    forced: dict[int, int]                # block index -> forced value
    cut_rows: list[tuple[np.ndarray, float]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.keep)

    def assemble(self, states: np.ndarray):
        """Inequality system for one node: base rows, block rows, OA cuts."""
        rows = [self.a_ub]
        rhs = [self.b_ub]
        for blk, st in zip(self.blocks, states):
            if st == 1:
                rows.append(blk.one_rows)
                rhs.append(blk.one_rhs)
            elif st == 0:
                rows.append(blk.zero_rows)
                rhs.append(blk.zero_rhs)
            else:
                rows.append(blk.free_rows)
                rhs.append(blk.free_rhs)
        if self.cut_rows:
            rows.append(np.array([r for r, _ in self.cut_rows]))
            rhs.append(np.array([h for _, h in self.cut_rows]))
        return np.vstack(rows), np.concatenate(rhs)

    def expand(self, x: np.ndarray, states: np.ndarray | None = None) -> np.ndarray:
        """Lift a compiled point into full model space.

        Projected binaries take their node state; undecided ones read 0.5 so
        callers can spot them.
        """
        full = np.zeros(len(self.model.vars))
        for midx, cidx in self.pos.items():
            full[midx] = x[cidx]
        if states is not None:
            for blk, st in zip(self.blocks, states):
                full[blk.model_idx] = 0.5 if st == FREE else float(st)
        for midx, (coeffs, const) in self.eliminated.items():
            full[midx] = const + sum(c * full[k] for k, c in coeffs.items())
        return full


def compile_model(model: MixedIntegerModel) -> Compiled:
    """Flatten a container into node-relaxation data.

    Binaries whose only appearance is gating their own indicator rows are
    projected out; each keeps three precomputed row blocks (value fixed to
    one, to zero, or still free).  A block whose rows cannot hold anywhere in
    the variable box forces the opposite value up front.
    """
    nvars = len(model.vars)
    defining: dict[int, LinearConstraint] = {}
    defining_ids: set[int] = set()
    for c in model.linear:
        if c.sense == "==" and c.name.startswith("motion_"):
            target = None
            for i in c.coeffs:
                if model.vars[i].meaning[0] in ("vx", "vy") and i not in defining:
                    target = i
                    break
            if target is not None:
                defining[target] = c
                defining_ids.add(id(c))

    eliminated: dict[int, tuple[dict[int, float], float]] = {}
    for vidx, row in defining.items():
        a = row.coeffs[vidx]
        coeffs = {k: -v / a for k, v in row.coeffs.items() if k != vidx}
        eliminated[vidx] = (coeffs, row.rhs / a)

    # A binary can be projected when nothing but its own gates reference it.
    gated: dict[int, list] = {}
    for ic in model.indicators:
        gated.setdefault(ic.binary, []).append(ic)
    blocked = set()
    for c in model.linear:
        for i in c.coeffs:
            if model.vars[i].kind == BINARY:
                blocked.add(i)
    for qc in model.quad:
        for i in qc.lin:
            blocked.add(i)
    for ic in model.indicators:
        for i in ic.constraint.coeffs:
            if model.vars[i].kind == BINARY:
                blocked.add(i)
    for i in model.objective_lin:
        blocked.add(i)
    for (i, j) in model.objective_quad:
        blocked.update(b for b in (i, j) if model.vars[b].kind == BINARY)
    projected = [
        v.idx
        for v in model.vars
        if v.kind == BINARY and v.idx in gated and v.idx not in blocked
    ]
    proj_set = set(projected)

    keep = [i for i in range(nvars) if i not in eliminated and i not in proj_set]
    pos = {midx: k for k, midx in enumerate(keep)}
    n = len(keep)

    def subst(coeffs: dict[int, float]) -> tuple[np.ndarray, float]:
        dense = np.zeros(n)
        shift = 0.0
        for i, c in coeffs.items():
            if i in eliminated:
                expr, const = eliminated[i]
                shift += c * const
                for k, ck in expr.items():
                    dense[pos[k]] += c * ck
            else:
                dense[pos[i]] += c
        return dense, shift

    a_eq_rows, b_eq = [], []
    a_ub_rows, b_ub = [], []

    def add_le(dense, rhs):
        a_ub_rows.append(dense)
        b_ub.append(rhs)

    for c in model.linear:
        if id(c) in defining_ids:
            continue
        dense, shift = subst(c.coeffs)
        rhs = c.rhs - shift
        if c.sense == "==":
            a_eq_rows.append(dense)
            b_eq.append(rhs)
        elif c.sense == "<=":
            add_le(dense, rhs)
        else:
            add_le(-dense, -rhs)

    for vidx in eliminated:
        ref = model.vars[vidx]
        dense, shift = subst({vidx: 1.0})
        if math.isfinite(ref.hi):
            add_le(dense, ref.hi - shift)
        if math.isfinite(ref.lo):
            add_le(-dense, shift - ref.lo)

    lb = np.array([model.vars[i].lo for i in keep])
    ub = np.array([model.vars[i].hi for i in keep])

    def box_min(coeffs: dict[int, float]) -> float:
        return sum(
            c * (model.vars[i].lo if c >= 0 else model.vars[i].hi) for i, c in coeffs.items()
        )

    blocks: list[_ProjBlock] = []
    forced: dict[int, int] = {}
    for bidx in projected:
        ones, zeros = [], []
        for ic in gated[bidx]:
            dense, shift = subst(ic.constraint.coeffs)
            entry = (dense, ic.constraint.rhs - shift, ic.big_m, box_min(ic.constraint.coeffs) > ic.constraint.rhs + 1e-9)
            (ones if ic.active_value == 1 else zeros).append(entry)
        combos, combo_rhs = [], []
        for d1, r1, m1, _ in ones:
            for d0, r0, m0, _ in zeros:
                if m1 <= 1e-12 or m0 <= 1e-12:
                    continue  # one side always holds; combination is implied
                row = d1 / m1 + d0 / m0
                rhs_c = r1 / m1 + r0 / m0 + 1.0
                # Opposite-normal pairs cancel to a vacuous row; skip them.
                if np.linalg.norm(row) <= 1e-12 * (np.linalg.norm(d1) / m1 + np.linalg.norm(d0) / m0):
                    continue
                combos.append(row)
                combo_rhs.append(rhs_c)
        one_rows = np.array([d for d, _, _, _ in ones]).reshape(-1, n)
        zero_rows = np.array([d for d, _, _, _ in zeros]).reshape(-1, n)
        blk = _ProjBlock(
            model_idx=bidx,
            one_rows=one_rows,
            one_rhs=np.array([r for _, r, _, _ in ones]),
            zero_rows=zero_rows,
            zero_rhs=np.array([r for _, r, _, _ in zeros]),
            free_rows=np.array(combos).reshape(-1, n),
            free_rhs=np.array(combo_rhs),
            norm_one=np.maximum(np.linalg.norm(one_rows, axis=1), 1e-12),
            norm_zero=np.maximum(np.linalg.norm(zero_rows, axis=1), 1e-12),
        )
        blocks.append(blk)
        if any(imp for _, _, _, imp in ones):
            forced[len(blocks) - 1] = 0
        elif any(imp for _, _, _, imp in zeros):
            forced[len(blocks) - 1] = 1

    for ic in model.indicators:
        if ic.binary in proj_set:
            continue
        dense, shift = subst(ic.constraint.coeffs)
        rhs = ic.constraint.rhs - shift
        b = pos[ic.binary]
        row = dense.copy()
        if ic.active_value == 1:
            row[b] += ic.big_m
            add_le(row, rhs + ic.big_m)
        else:
            row[b] -= ic.big_m
            add_le(row, rhs)
        others = [i for i in ic.constraint.coeffs if model.vars[i].kind == BINARY and i != ic.binary]
        if not others and box_min(ic.constraint.coeffs) > ic.constraint.rhs + 1e-9:
            if ic.active_value == 1:
                ub[b] = min(ub[b], 0.0)
            else:
                lb[b] = max(lb[b], 1.0)

    q = np.zeros((n, n))
    c_vec = np.zeros(n)
    for (i, j), coef in model.objective_quad.items():
        if i == j:
            q[pos[i], pos[i]] += 2.0 * coef
        else:
            q[pos[i], pos[j]] += coef
            q[pos[j], pos[i]] += coef
    for i, coef in model.objective_lin.items():
        c_vec[pos[i]] += coef

    quads = []
    for qc in model.quad:
        lin, shift = subst(qc.lin)
        qmat = {}
        for (i, j), coef in qc.quad.items():
            a, b = sorted((pos[i], pos[j]))
            qmat[(a, b)] = qmat.get((a, b), 0.0) + coef
        quads.append(_Quad(qmat, lin, qc.rhs - shift, qc.name))

    return Compiled(
        model=model,
        keep=keep,
        pos=pos,
        q=q,
        c=c_vec,
        const=model.objective_const,
        a_eq=np.array(a_eq_rows).reshape(-1, n) if a_eq_rows else np.zeros((0, n)),
        b_eq=np.array(b_eq),
        a_ub=np.array(a_ub_rows).reshape(-1, n) if a_ub_rows else np.zeros((0, n)),
        b_ub=np.array(b_ub),
        lb=lb,
        ub=ub,
        binaries=[pos[v.idx] for v in model.vars if v.kind == BINARY and v.idx not in proj_set],
        quads=quads,
        eliminated=eliminated,
        blocks=blocks,
        forced=forced,
    )


def root_states(comp: Compiled) -> np.ndarray:
    states = np.full(len(comp.blocks), FREE, dtype=np.int8)
    for k, val in comp.forced.items():
        states[k] = val
    return states


def _solve_node(comp: Compiled, lo, hi, states, warm=None):
    """QP with lazy outer approximation of the convex quadratic rows."""
    if warm is not None:
        warm = np.clip(warm, lo, hi)
    for _ in range(_OA_ROUNDS):
        rows, rhs = comp.assemble(states)
        qp = QpProblem.build(comp.q, comp.c, comp.a_eq, comp.b_eq, rows, rhs, lo, hi)
        res = solve_qp(qp, warm_start=warm)
        worst = None
        for quad in comp.quads:
            viol = quad.value(res.x) - quad.rhs
            if viol > QUAD_TOL and (worst is None or viol > worst[0]):
                worst = (viol, quad)
        if worst is None:
            return res
        grad, cut_rhs = worst[1].oa_cut(res.x)
        comp.cut_rows.append((grad, cut_rhs))
        warm = res.x
    raise QpMaxIterations("outer approximation failed to converge at a node")


def _quad_feasible(comp: Compiled, x) -> bool:
    return all(quad.value(x) <= quad.rhs + QUAD_TOL for quad in comp.quads)


def _block_choice(comp: Compiled, blk: _ProjBlock, x) -> tuple[float, float]:
    """Normalised violations of the two sides of one projected binary."""
    v1 = float(((blk.one_rows @ x - blk.one_rhs) / blk.norm_one).max()) if blk.one_rhs.size else 0.0
    v0 = float(((blk.zero_rows @ x - blk.zero_rhs) / blk.norm_zero).max()) if blk.zero_rhs.size else 0.0
    return v1, v0


def _probe_assignment(comp: Compiled, x, lo, hi, states) -> np.ndarray | None:
    """Integral assignment supported by the node's continuous point.

    Projected binaries take any side whose hard rows hold at the point;
    in-QP binaries are grouped by selector structure from their meanings.
    Returns the full-space candidate or None.  Valid because binaries carry
    no objective weight in these models.
    """
    model = comp.model
    tol = 1e-7
    new_states = states.copy()
    for k, blk in enumerate(comp.blocks):
        if states[k] != FREE:
            continue
        v1, v0 = _block_choice(comp, blk, x)
        if v1 <= tol:
            new_states[k] = 1
        elif v0 <= tol:
            new_states[k] = 0
        else:
            return None
    full = comp.expand(x, new_states)
    by_gate: dict[int, list] = {}
    for ic in model.indicators:
        by_gate.setdefault(ic.binary, []).append(ic)

    def rows_hold(binary_idx: int, value: int, point) -> bool:
        point[binary_idx] = value
        for ic in by_gate.get(binary_idx, ()):
            if not ic.satisfied(point, tol):
                return False
        return True

    groups: dict[tuple, list[int]] = {}
    singles: list[int] = []
    proj_models = {blk.model_idx for blk in comp.blocks}
    for v in model.vars:
        if v.kind != BINARY or v.idx in proj_models:
            continue
        if v.meaning[0] in ("sigma", "seg_x", "seg_y", "rho"):
            groups.setdefault((v.meaning[0],) + tuple(v.meaning[1:-1]), []).append(v.idx)
        else:
            singles.append(v.idx)

    for idx in singles:
        cidx = comp.pos[idx]
        near = int(round(x[cidx]))
        chosen = None
        for val in (near, 1 - near):
            if lo[cidx] - 0.5 <= val <= hi[cidx] + 0.5 and rows_hold(idx, val, full):
                chosen = val
                break
        if chosen is None:
            return None
        full[idx] = chosen

    for _, members in sorted(groups.items()):
        members = sorted(members)
        chosen = None
        for idx in members:
            cidx = comp.pos[idx]
            if hi[cidx] < 0.5:
                continue
            trial = full.copy()
            for other in members:
                trial[other] = 0.0
            if rows_hold(idx, 1, trial):
                chosen = idx
                break
        if chosen is None:
            return None
        for other in members:
            full[other] = 1.0 if other == chosen else 0.0
            cidx = comp.pos[other]
            if not lo[cidx] - 0.5 <= full[other] <= hi[cidx] + 0.5:
                return None

    for c in model.linear:
        if any(model.vars[i].kind == BINARY for i in c.coeffs) and not c.satisfied(full, tol):
            return None
    for ic in model.indicators:
        if not ic.satisfied(full, tol):
            return None
    return full


def _dive_states(comp: Compiled, x, lo, hi, states):
    """Least-violated side per undecided binary, for the incumbent dive."""
    model = comp.model
    new_states = states.copy()
    for k, blk in enumerate(comp.blocks):
        if states[k] == FREE:
            v1, v0 = _block_choice(comp, blk, x)
            new_states[k] = 1 if v1 <= v0 else 0
    full = comp.expand(x, new_states)
    by_gate: dict[int, list] = {}
    for ic in model.indicators:
        by_gate.setdefault(ic.binary, []).append(ic)

    def violation(binary_idx: int, value: int) -> float:
        worst = 0.0
        for ic in by_gate.get(binary_idx, ()):
            if ic.active_value != value:
                continue
            c = ic.constraint
            v = sum(coef * full[i] for i, coef in c.coeffs.items() if i != binary_idx)
            worst = max(worst, v - c.rhs if c.sense == "<=" else c.rhs - v)
        return worst

    choice: dict[int, float] = {}
    groups: dict[tuple, list[int]] = {}
    proj_models = {blk.model_idx for blk in comp.blocks}
    for v in model.vars:
        if v.kind != BINARY or v.idx in proj_models:
            continue
        cidx = comp.pos[v.idx]
        if hi[cidx] - lo[cidx] < 0.5:
            choice[cidx] = lo[cidx]
            continue
        if v.meaning[0] in ("sigma", "seg_x", "seg_y", "rho"):
            groups.setdefault((v.meaning[0],) + tuple(v.meaning[1:-1]), []).append(v.idx)
        else:
            scored = sorted(((violation(v.idx, val), -val) for val in (0, 1)))
            choice[cidx] = float(-scored[0][1])
    for _, members in sorted(groups.items()):
        best = min((violation(idx, 1), idx) for idx in sorted(members))
        for idx in members:
            choice[comp.pos[idx]] = 1.0 if idx == best[1] else 0.0
    return new_states, choice


def branch_and_bound(model: MixedIntegerModel, params: BnBParams | None = None,
                     compiled: Compiled | None = None) -> BnBResult:
    """Solve the mixed-integer model to the requested gap.

    Returns the incumbent full-space point; on timeout the best incumbent
    and bound so far.
    """
    params = params or BnBParams()
    comp = compiled or compile_model(model)
    start = time.perf_counter()
    events = params.events

    def log(kind, **kw):
        if events is not None:
            events.append({"event": kind, "t": round(time.perf_counter() - start, 6), **kw})

    counter = itertools.count()
    ub = math.inf
    incumbent = None
    heap: list = []
    plunge: list = []
    nodes = 0
    status = "optimal"
    lb_final = math.inf

    def accept(point_full, value, source):
        nonlocal ub, incumbent
        if value < ub - 1e-12 and model.feasible(point_full, 1e-6):
            ub = value
            incumbent = point_full
            log("incumbent", nodes=nodes, ub=ub, source=source)
            return True
        return False

    def process(lo, hi, states, warm, depth):
        nonlocal nodes, ub, incumbent
        nodes += 1
        try:
            res = _solve_node(comp, lo, hi, states, warm)
        except QpInfeasible:
            log("prune_infeasible", nodes=nodes)
            return None
        x = res.x
        bound = res.obj + comp.const
        if bound >= ub - params.eps * max(abs(ub), 1e-12):
            log("prune_bound", nodes=nodes, lb=bound)
            return None
        free_np = [b for b in comp.binaries if hi[b] - lo[b] > 0.5]
        frac = [(abs(x[b] - round(x[b])), b) for b in free_np]
        worst_frac = max((f for f, _ in frac), default=0.0)
        free_blocks = [k for k in range(len(comp.blocks)) if states[k] == FREE]

        if worst_frac <= INT_TOL and not free_blocks:
            if not free_np:
                accept(comp.expand(x, states), bound, "leaf")
                return None
            rounded = comp.expand(x, states)
            for v in model.vars:
                if v.kind == BINARY:
                    rounded[v.idx] = round(rounded[v.idx])
            if model.feasible(rounded, 1e-6):
                accept(rounded, bound, "round")
                return None
            clo, chi = lo.copy(), hi.copy()
            for b in free_np:
                clo[b] = chi[b] = round(x[b])
            try:
                leaf = _solve_node(comp, clo, chi, states, x)
                leaf_val = leaf.obj + comp.const
                accept(comp.expand(leaf.x, states), leaf_val, "clamp")
                if leaf_val <= bound + 1e-9 * max(1.0, abs(bound)):
                    return None
            except QpInfeasible:
                pass
            bvar, bkind, near = free_np[0], "col", int(round(x[free_np[0]]))
        else:
            cand = _probe_assignment(comp, x, lo, hi, states)
            if cand is not None and accept(cand, bound, "probe"):
                return None
            # Deepest-violation projected binary first: it forces the bound
            # up fastest.  Otherwise most fractional in-QP binary.
            best = None
            for k in free_blocks:
                v1, v0 = _block_choice(comp, comp.blocks[k], x)
                if v1 > 1e-9 and v0 > 1e-9:
                    score = min(v1, v0)
                    if best is None or score > best[0] + 1e-15:
                        best = (score, k, 1 if v1 <= v0 else 0)
            if best is not None:
                _, bvar, near = best
                bkind = "block"
            elif worst_frac > INT_TOL:
                _, bvar = min((-f, b) for f, b in frac if f > INT_TOL)
                bkind, near = "col", int(round(x[bvar]))
            elif free_blocks:
                bvar, bkind = free_blocks[0], "block"
                v1, v0 = _block_choice(comp, comp.blocks[bvar], x)
                near = 1 if v1 <= v0 else 0
            else:
                bvar, bkind, near = free_np[0], "col", int(round(x[free_np[0]]))

        children = []
        for val in (near, 1 - near):
            if bkind == "block":
                cst = states.copy()
                cst[bvar] = val
                children.append((bound, lo, hi, cst, x.copy(), depth + 1))
            else:
                clo, chi = lo.copy(), hi.copy()
                clo[bvar] = chi[bvar] = float(val)
                children.append((bound, clo, chi, states, x.copy(), depth + 1))
        return children

    root_lo, root_hi = comp.lb.copy(), comp.ub.copy()
    states0 = root_states(comp)
    root = process(root_lo, root_hi, states0, None, 0)
    if root and incumbent is None:
        # One dive: clamp everything at its least-violated value; the leaf
        # QP decides feasibility and seeds the bound for pruning.
        _, _, _, _, x_root, _ = root[0]
        dstates, dchoice = _dive_states(comp, x_root, root_lo, root_hi, states0)
        dlo, dhi = root_lo.copy(), root_hi.copy()
        for cidx, val in dchoice.items():
            dlo[cidx] = dhi[cidx] = val
        try:
            leaf = _solve_node(comp, dlo, dhi, dstates, x_root)
            nodes += 1
            accept(comp.expand(leaf.x, dstates), leaf.obj + comp.const, "dive")
        except QpInfeasible:
            pass
    if root:
        for child in reversed(root):
            plunge.append(child)

    def open_lb():
        return min(
            min((h[0] for h in heap), default=math.inf),
            min((p[0] for p in plunge), default=math.inf),
        )

    while plunge or heap:
        if time.perf_counter() - start > params.time_limit:
            status = "timeout"
            break
        if nodes >= params.max_nodes:
            status = "node_limit"
            break
        if incumbent is None and plunge:
            bound, lo, hi, states, warm, depth = plunge.pop()
        elif heap:
            bound, _, lo, hi, states, warm, depth = heapq.heappop(heap)
        else:
            bound, lo, hi, states, warm, depth = plunge.pop()
        lb_now = min(bound, open_lb())
        if ub < math.inf and (ub - lb_now) <= params.eps * max(abs(ub), 1e-12):
            status = "optimal"
            lb_final = lb_now
            plunge.clear()
            heap.clear()
            break
        if bound >= ub - params.eps * max(abs(ub), 1e-12):
            continue
        children = process(lo, hi, states, warm, depth)
        if children:
            if incumbent is None:
                for child in reversed(children):
                    plunge.append(child)
            else:
                for child in children:
                    heapq.heappush(heap, (child[0], next(counter)) + tuple(child[1:]))

    if math.isinf(lb_final):
        lb_final = min(open_lb(), ub)
    wall = time.perf_counter() - start
    if incumbent is None:
        if status == "optimal":
            return BnBResult("infeasible", math.inf, math.inf, None, math.inf, nodes, wall)
        return BnBResult(status, lb_final if math.isfinite(lb_final) else 0.0, math.inf, None, math.inf, nodes, wall)
    gap = max(0.0, (ub - lb_final) / max(abs(ub), 1e-12))
    log("done", nodes=nodes, lb=lb_final, ub=ub, status=status)
    return BnBResult(status, lb_final, ub, incumbent, gap, nodes, wall)

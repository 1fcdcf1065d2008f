"""Command-line interface: generate, solve, benchmark, sweep and plot.

Exit codes: 0 solved or generated, 2 infeasible, 3 timed out, 1 usage or
internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import api, bench, instances
from .fl import FlInfeasible
from .geometry import InitialLossOfSeparation, partition_pairs
from .instances import ControlBounds, SchemaError
from .model import lp_dump
from .solve2d import SolverParams
from .svgplot import UnknownPair, plot_trajectories, plot_velocity_plane

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_TIMEOUT = 3


def _f17(x: float) -> float:
    return float(f"{x:.17g}") if math.isfinite(x) else x


def _bounds_from_flags(inst_bounds: ControlBounds, args) -> ControlBounds:
    q_lo, q_hi = inst_bounds.q_lo, inst_bounds.q_hi
    th_lo, th_hi = inst_bounds.theta_lo, inst_bounds.theta_hi
    if args.speed_pct is not None:
        lo_pct, hi_pct = (float(v) for v in args.speed_pct.split(":"))
        q_lo, q_hi = 1.0 + lo_pct / 100.0, 1.0 + hi_pct / 100.0
    if args.heading_deg is not None:
        th_hi = math.radians(args.heading_deg)
        th_lo = -th_hi
    return ControlBounds(q_lo, q_hi, th_lo, th_hi)


def _solution_doc(status, objective, lb, ub, gap, per_aircraft, extra=None) -> str:
    doc = {
        "status": status,
        "objective": _f17(objective),
        "lb": _f17(lb),
        "ub": _f17(ub),
        "gap": _f17(gap),
        "aircraft": per_aircraft,
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2) + "\n"


def _cmd_gen(args) -> int:
    inst = instances.generate(args.family, args.n, args.seed, args.fl_count)
    text = instances.to_json(inst)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _status_code(status: str) -> int:
    if status == "optimal":
        return EXIT_OK
    if status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_TIMEOUT


def _cmd_solve(args) -> int:
    inst = instances.load(args.instance)
    cb = _bounds_from_flags(inst.bounds, args)
    inst = instances.Instance(inst.aircraft, inst.d, cb, inst.family, inst.seed)
    params = SolverParams(formulation=args.formulation, w=args.w, eps=args.eps,
                          time_limit=args.time_limit)
    if args.dump_model:
        from .model import build_2d_disjunctive, build_2d_shadow

        part = api.preprocess(inst)
        builder = build_2d_disjunctive if args.formulation == "disjunctive" else build_2d_shadow
        model = builder(list(inst.aircraft), part, args.w, cb, relax_speed=True)
        with open(args.dump_model, "w", encoding="utf-8") as fh:
            fh.write(lp_dump(model))
    if args.fl:
        sol = api.solve_2dfl(inst, params)
        per_aircraft = [
            {
                "q": _f17(q),
                "theta_rad": _f17(th),
                "fl": sol.assignment.levels[k] if sol.assignment else None,
            }
            for k, (q, th) in enumerate(sol.controls or [(1.0, 0.0)] * inst.n)
        ]
        lbs = sum(o.lb for o in sol.per_level.values() if math.isfinite(o.lb))
        text = _solution_doc(
            sol.status, sol.total_2d_deviation, lbs, sol.total_2d_deviation,
            0.0 if sol.status == "optimal" else math.inf, per_aircraft,
            extra={"fl_deviation": sol.fl_deviation, "rounds": sol.iterations},
        )
        code = _status_code(sol.status)
    else:
        out = api.solve_2d(inst, params)
        controls = out.controls or [(math.nan, math.nan)] * inst.n
        per_aircraft = [
            {"q": _f17(q), "theta_rad": _f17(th), "fl": inst.aircraft[k].fl}
            for k, (q, th) in enumerate(controls)
        ]
        text = _solution_doc(out.status, out.ub, out.lb, out.ub, out.gap, per_aircraft)
        code = _status_code(out.status)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


def _cmd_bench(args) -> int:
    params = SolverParams(w=args.w, eps=args.eps, time_limit=args.time_limit)
    records = bench.run_suite(args.suite, params, out_path=args.out)
    for r in records:
        sys.stdout.write(
            f"{r.instance}: ub={r.disj_ub:.4g} gap={r.disj_gap_pct:.2f}% "
            f"time={r.disj_time_s}s shadow_dub={r.shadow_delta_ub:.2g}\n"
        )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    inst = instances.load(args.instance)
    ws = [round(0.1 * k, 1) for k in range(1, 10)] if not args.w_values else [
        float(v) for v in args.w_values.split(",")
    ]
    rows = bench.sweep_w(inst, ws, SolverParams(time_limit=args.time_limit))
    bench.write_sweep_csv(rows, args.out)
    for w, sq, st in rows:
        sys.stdout.write(f"w={w}: speed_dev={sq:.6g} heading_dev={st:.6g}\n")
    return EXIT_OK


def _cmd_plot(args) -> int:
    inst = instances.load(args.instance)
    controls = None
    if args.solution:
        with open(args.solution, encoding="utf-8") as fh:
            doc = json.load(fh)
        controls = [(a["q"], a["theta_rad"]) for a in doc["aircraft"]]
    if args.mode == "trajectories":
        svg = plot_trajectories(list(inst.aircraft), controls)
    else:
        if not args.pair:
            raise SystemExit("velocity-plane mode needs --pair i,j")
        i, j = (int(v) for v in args.pair.split(","))
        part = partition_pairs(list(inst.aircraft), inst.d, inst.bounds)
        if (i, j) not in part.geometries:
            raise UnknownPair(f"({i}, {j}) is not a pair of this instance")
        svg = plot_velocity_plane(list(inst.aircraft), part.geometries[(i, j)], (i, j), controls)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deconflict",
                                 description="Aircraft conflict resolution toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a benchmark instance")
    gen.add_argument("family", choices=sorted(instances._FAMILIES))
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--fl-count", type=int, default=None)
    gen.add_argument("--out", default=None)
    gen.set_defaults(func=_cmd_gen)

    solve = sub.add_parser("solve", help="solve an instance file")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--formulation", choices=["disjunctive", "shadow"], default="disjunctive")
    solve.add_argument("--w", type=float, default=0.5)
    solve.add_argument("--eps", type=float, default=0.01)
    solve.add_argument("--time-limit", type=float, default=600.0)
    solve.add_argument("--heading-deg", type=float, default=None)
    solve.add_argument("--speed-pct", default=None, help="speed range in percent, e.g. -6:3")
    solve.add_argument("--fl", action="store_true", help="level-change-first lexicographic solve")
    solve.add_argument("--out", default=None)
    solve.add_argument("--dump-model", default=None, help="write the model in text form")
    solve.set_defaults(func=_cmd_solve)

    bn = sub.add_parser("bench", help="run a benchmark suite")
    bn.add_argument("--suite", required=True, choices=sorted(bench.SUITES))
    bn.add_argument("--out", required=True)
    bn.add_argument("--w", type=float, default=0.5)
    bn.add_argument("--eps", type=float, default=0.01)
    bn.add_argument("--time-limit", type=float, default=600.0)
    bn.set_defaults(func=_cmd_bench)

    sw = sub.add_parser("sweep-w", help="preference-weight sensitivity table")
    sw.add_argument("--instance", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--w-values", default=None, help="comma list; default 0.1..0.9")
    sw.add_argument("--time-limit", type=float, default=600.0)
    sw.set_defaults(func=_cmd_sweep)

    pl = sub.add_parser("plot", help="render an instance or solution as SVG")
    pl.add_argument("--instance", required=True)
    pl.add_argument("--solution", default=None)
    pl.add_argument("--mode", choices=["trajectories", "velocity-plane"], default="trajectories")
    pl.add_argument("--pair", default=None)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=_cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, UnknownPair, FlInfeasible, InitialLossOfSeparation, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR if not isinstance(exc, (FlInfeasible, InitialLossOfSeparation)) else EXIT_INFEASIBLE
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

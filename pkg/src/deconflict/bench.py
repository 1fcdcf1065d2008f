"""Benchmark harness: suites, result tables and the weight sweep.

A suite run solves each instance with both separation formulations, collects
one record per instance with preprocessing statistics and per-formulation
bounds/timings, and writes a CSV whose columns match the record fields in
order.  Solver event logs are archived as JSON lines next to the CSV.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass

from .api import solve_2d
from .geometry import count_nominal_conflicts, partition_pairs
from .instances import Instance, gen_cp, gen_fp, gen_gp, gen_rcp
from .solve2d import SolverParams, deviation_totals


@dataclass
class BenchmarkRecord:
    instance: str
    n_aircraft: int
    n_conflicts: int
    frac_conflict_free: float
    frac_non_separable: float
    preprocess_s: float
    disj_lb: float
    disj_ub: float
    disj_gap_pct: float
    disj_time_s: float
    disj_outer_iters: int
    disj_timeout: int
    shadow_delta_ub: float
    shadow_gap_pct: float
    shadow_time_s: float
    shadow_timeout: int
    gain_pct: float

    @classmethod
    def fields(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def row(self) -> list:
        return [getattr(self, name) for name in self.fields()]


def _gap_pct(lb: float, ub: float) -> float:
    if not math.isfinite(ub) or ub <= 0:
        return math.inf if not math.isfinite(ub) else 0.0
    return 100.0 * max(0.0, ub - lb) / ub


SUITES = {
    "cp": lambda: [(f"cp-{n}", gen_cp(n)) for n in range(4, 9)],
    "fp": lambda: [(f"fp-{n}", gen_fp(n)) for n in range(4, 7)],
    "gp": lambda: [(f"gp-{n}", gen_gp(n)) for n in range(4, 6)],
    "rcp10": lambda: [(f"rcp-10-s{s}", gen_rcp(10, seed=s)) for s in range(10)],
    "quick": lambda: [("cp-4", gen_cp(4)), ("fp-4", gen_fp(4))],
}
SUITES["golden"] = lambda: SUITES["cp"]() + SUITES["fp"]() + SUITES["gp"]()


def run_instance(name: str, inst: Instance, params: SolverParams,
                 events_sink: list | None = None) -> BenchmarkRecord:
    """Solve one instance with both formulations and assemble its record."""
    part = partition_pairs(list(inst.aircraft), inst.d, inst.bounds)
    n_pairs = max(1, len(part.pairs))
    n_c = count_nominal_conflicts(list(inst.aircraft), part)

    def run(formulation):
        events = [] if events_sink is not None else None
        p = SolverParams(
            formulation=formulation, w=params.w, eps=params.eps,
            time_limit=params.time_limit, events=events,
        )
        t0 = time.perf_counter()
        out = solve_2d(inst, p)
        wall = time.perf_counter() - t0
        if events_sink is not None:
            for e in events:
                events_sink.append({"instance": name, "formulation": formulation, **e})
        return out, wall

    disj, t_disj = run("disjunctive")
    shad, t_shad = run("shadow")
    gain = 100.0 * (t_shad - t_disj) / t_shad if (
        t_shad > 0 and disj.status == "optimal" and shad.status == "optimal"
    ) else math.nan
    return BenchmarkRecord(
        instance=name,
        n_aircraft=inst.n,
        n_conflicts=n_c,
        frac_conflict_free=len(part.conflict_free) / n_pairs,
        frac_non_separable=len(part.non_separable) / n_pairs,
        preprocess_s=round(part.seconds, 6),
        disj_lb=disj.lb,
        disj_ub=disj.ub,
        disj_gap_pct=_gap_pct(disj.lb, disj.ub),
        disj_time_s=round(t_disj, 3),
        disj_outer_iters=disj.n_outer,
        disj_timeout=int(disj.status == "timeout"),
        shadow_delta_ub=(shad.ub - disj.ub) if math.isfinite(shad.ub) and math.isfinite(disj.ub) else math.nan,
        shadow_gap_pct=_gap_pct(shad.lb, shad.ub),
        shadow_time_s=round(t_shad, 3),
        shadow_timeout=int(shad.status == "timeout"),
        gain_pct=round(gain, 1) if math.isfinite(gain) else math.nan,
    )


def run_suite(suite: str, params: SolverParams | None = None, out_path=None,
              archive_events: bool = True) -> list[BenchmarkRecord]:
    """Run every instance of a named suite; failures never abort the run."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; pick one of {sorted(SUITES)}")
    params = params or SolverParams()
    records = []
    events: list = [] if archive_events else None
    for name, inst in SUITES[suite]():
        try:
            records.append(run_instance(name, inst, params, events))
        except Exception as exc:  # noqa: BLE001 - per-instance isolation
            records.append(
                BenchmarkRecord(
                    instance=f"{name} [error: {type(exc).__name__}]", n_aircraft=inst.n,
                    n_conflicts=-1, frac_conflict_free=math.nan, frac_non_separable=math.nan,
                    preprocess_s=math.nan, disj_lb=math.nan, disj_ub=math.nan,
                    disj_gap_pct=math.nan, disj_time_s=math.nan, disj_outer_iters=-1,
                    disj_timeout=0, shadow_delta_ub=math.nan, shadow_gap_pct=math.nan,
                    shadow_time_s=math.nan, shadow_timeout=0, gain_pct=math.nan,
                )
            )
    records.sort(key=lambda r: r.instance)
    if out_path is not None:
        write_csv(records, out_path)
        if archive_events:
            with open(str(out_path) + ".events.jsonl", "w", encoding="utf-8") as fh:
                for e in events:
                    fh.write(json.dumps(e, sort_keys=True) + "\n")
    return records


def write_csv(records: list[BenchmarkRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(BenchmarkRecord.fields())
        for r in records:
            writer.writerow(r.row())


def read_csv(path) -> list[BenchmarkRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != BenchmarkRecord.fields():
            raise ValueError("unexpected benchmark CSV header")
        for row in reader:
            kwargs = {}
            for f in dataclasses.fields(BenchmarkRecord):
                raw = row[f.name]
                if f.type == "str" or f.name == "instance":
                    kwargs[f.name] = raw
                elif f.type == "int" or f.name.endswith(("timeout", "iters")) or f.name in ("n_aircraft", "n_conflicts"):
                    kwargs[f.name] = int(raw)
                else:
                    kwargs[f.name] = float(raw)
            out.append(BenchmarkRecord(**kwargs))
    return out


def sweep_w(inst: Instance, w_values, params: SolverParams | None = None):
    """Optimal speed/heading deviation totals per preference weight.

    Returns rows (w, total squared speed deviation, total squared heading
    deviation) solved at a tight gap so the trade-off trend is exact.
    """
    base = params or SolverParams()
    rows = []
    for w in w_values:
        if not 0.0 < w < 1.0:
            raise ValueError("weights must lie strictly between 0 and 1")
        p = SolverParams(formulation=base.formulation, w=w, eps=min(base.eps, 1e-6),
                         time_limit=base.time_limit)
        out = solve_2d(inst, p)
        if out.status != "optimal":
            raise RuntimeError(f"sweep solve at w={w} ended with status {out.status}")
        sq, st = deviation_totals(out.controls)
        rows.append((w, sq, st))
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w", "sum_speed_dev_sq", "sum_heading_dev_sq"])
        for w, sq, st in rows:
            writer.writerow([f"{w:.17g}", f"{sq:.17g}", f"{st:.17g}"])

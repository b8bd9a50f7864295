"""Command-line harness: run | map | bench.

`run` executes one closed-loop scenario and writes the step log (CSV) plus
an outcome summary (JSON). `map` sweeps the scenario's grid section under
one or more strategies and writes feasibility maps plus pairwise region
comparisons against the first strategy. `bench` times the solver per step
across strategies and reports reductions against the first-listed baseline.

Exit codes: 0 completed, 2 violated, 3 infeasible, 4 configuration error,
5 internal solver/runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .bench import run_bench, write_bench
from .constraints import GCBF, MultiStepCBF, Pointwise, SingleStepCBF
from .feasmap import compare_regions, sweep, write_comparison, write_map_csv, \
    write_map_grid
from .scenario_io import ScenarioError, load_grid, load_scenario
from .sim import (COMPLETED, INFEASIBLE_AT, VIOLATED_AT, run_scenario,
                  write_log_csv, write_outcome_json)

EXIT_OK = 0
EXIT_VIOLATED = 2
EXIT_INFEASIBLE = 3
EXIT_CONFIG = 4
EXIT_INTERNAL = 5


def parse_strategy_arg(text: str):
    """Parse compact strategy syntax: pointwise:N, gcbf:LAM[:M],
    multistep_cbf:LAM, singlestep_cbf:LAM."""
    parts = text.split(":")
    name = parts[0]
    try:
        if name == "pointwise" and len(parts) == 2:
            return Pointwise(n_c=int(parts[1]))
        if name == "multistep_cbf" and len(parts) == 2:
            return MultiStepCBF(lam=float(parts[1]))
        if name == "singlestep_cbf" and len(parts) == 2:
            return SingleStepCBF(lam=float(parts[1]))
        if name == "gcbf" and len(parts) in (2, 3):
            m = int(parts[2]) if len(parts) == 3 else 2
            return GCBF(lam=float(parts[1]), m=m)
    except ValueError as exc:
        raise ScenarioError(f"bad strategy argument {text!r}: {exc}") from exc
    raise ScenarioError(
        f"bad strategy argument {text!r}; expected pointwise:N, gcbf:LAM[:M],"
        f" multistep_cbf:LAM or singlestep_cbf:LAM")


def _apply_overrides(scenario, args):
    updates = {}
    if args.steps is not None:
        updates["steps"] = args.steps
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.relax:
        updates["relax"] = True
    tol = {}
    if args.tol_feas is not None:
        tol["tol_feas"] = args.tol_feas
    if args.tol_opt is not None:
        tol["tol_opt"] = args.tol_opt
    if args.max_iter is not None:
        tol["max_iter"] = args.max_iter
    if tol:
        updates["settings"] = dataclasses.replace(scenario.settings, **tol)
    return dataclasses.replace(scenario, **updates) if updates else scenario


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    scenario, _ = load_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    out = _out_dir(args)
    stem = Path(args.scenario).stem
    log, outcome = run_scenario(scenario)
    write_log_csv(log, out / f"{stem}_log.csv", params=scenario.params)
    write_outcome_json(outcome, out / f"{stem}_summary.json")
    print(f"{stem}: {outcome.status}"
          + (f" at step {outcome.failed_at}" if outcome.failed_at is not None
             else "")
          + f", max h = {outcome.max_h:.6g},"
          f" mean solve = {outcome.mean_solve_ms:.3f} ms")
    if outcome.status == COMPLETED:
        return EXIT_OK
    if outcome.status == VIOLATED_AT:
        return EXIT_VIOLATED
    if outcome.status == INFEASIBLE_AT:
        return EXIT_INFEASIBLE
    return EXIT_INTERNAL


def cmd_map(args) -> int:
    grid, scenario, _ = load_grid(args.scenario)
    scenario = _apply_overrides(scenario, args)
    grid = dataclasses.replace(grid, scenario=scenario)
    strategies = [parse_strategy_arg(t) for t in args.strategy] \
        if args.strategy else [scenario.strategy]
    out = _out_dir(args)
    stem = Path(args.scenario).stem
    maps = []
    for strat in strategies:
        fmap = sweep(grid, strat, workers=args.workers)
        maps.append(fmap)
        write_map_csv(fmap, out / f"{stem}_{fmap.strategy}_map.csv")
        write_map_grid(fmap, out / f"{stem}_{fmap.strategy}_grid.dat")
        print(f"{fmap.strategy}: feasible {fmap.feasible_count()} of "
              f"{grid.n_delta_d * grid.n_delta_v} cells "
              f"({fmap.label_counts()})")
    for other in maps[1:]:
        comp = compare_regions(maps[0], other)
        base = f"{stem}_{comp.strategy_a}_vs_{comp.strategy_b}"
        write_comparison(comp, out / (base + ".json"),
                         out / (base + "_diff.csv"))
        print(f"{comp.strategy_a} vs {comp.strategy_b}: "
              f"{comp.feasible_a} vs {comp.feasible_b} "
              f"(difference {comp.difference:+d})")
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario, _ = load_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    if not args.strategy or len(args.strategy) < 2:
        raise ScenarioError("bench needs at least two --strategy arguments "
                            "(baseline first)")
    strategies = [parse_strategy_arg(t) for t in args.strategy]
    out = _out_dir(args)
    stem = Path(args.scenario).stem
    report = run_bench(scenario, strategies, repetitions=args.repetitions)
    write_bench(report, out / f"{stem}_bench.json", out / f"{stem}_bench.csv")
    for label, e in report.entries.items():
        red = report.reductions.get(label)
        extra = f", reduction vs {report.baseline}: {red * 100:.2f}%" \
            if red is not None and red == red else ""
        print(f"{label}: mean {e.mean_ms:.3f} ms over {e.samples} solves "
              f"({e.inequality_count} inequalities){extra}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rhckit",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--out-dir", default="out",
                       help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--steps", type=int, default=None,
                       help="override simulation length in real steps")
        p.add_argument("--tol-feas", type=float, default=None)
        p.add_argument("--tol-opt", type=float, default=None)
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--relax", action="store_true",
                       help="continue on infeasible solves with the "
                            "slack-softened plan (flagged in the log)")

    p_run = sub.add_parser("run", help="run one closed-loop scenario")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_map = sub.add_parser("map", help="feasible-region sweep")
    common(p_map)
    p_map.add_argument("--strategy", action="append", default=None,
                       help="strategy (repeatable); first is the comparison "
                            "base. Syntax: pointwise:N | gcbf:LAM[:M] | "
                            "multistep_cbf:LAM | singlestep_cbf:LAM")
    p_map.add_argument("--workers", type=int, default=1,
                       help="parallel sweep workers")
    p_map.set_defaults(func=cmd_map)

    p_bench = sub.add_parser("bench", help="per-step solve-time benchmark")
    common(p_bench)
    p_bench.add_argument("--strategy", action="append", default=None,
                         help="strategy (repeatable); first is the baseline")
    p_bench.add_argument("--repetitions", type=int, default=3)
    p_bench.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

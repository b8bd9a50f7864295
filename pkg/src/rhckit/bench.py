"""Per-step solve-time benchmarking across constraint strategies.

Each repetition replays the identical scenario (same disturbance profile and
initial state) under every strategy; samples are the per-step solver wall
times recorded inside `solve_sqp` itself, so file IO and logging never
contaminate the statistics. Runs are strictly sequential for timing
stability.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintStrategy, build_constraints
from .sim import Scenario, run_scenario, strategy_label

__all__ = ["BenchEntry", "BenchReport", "run_bench", "write_bench"]


@dataclass
class BenchEntry:
    strategy: str
    inequality_count: int
    samples: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    mean_iterations: float
    statuses: list[str] = field(default_factory=list)
    available: bool = True

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "inequality_count": self.inequality_count,
            "samples": self.samples,
            "mean_ms": self.mean_ms,
            "median_ms": self.median_ms,
            "p95_ms": self.p95_ms,
            "mean_iterations": self.mean_iterations,
            "statuses": self.statuses,
            "available": self.available,
        }


@dataclass
class BenchReport:
    baseline: str
    repetitions: int
    entries: dict[str, BenchEntry]
    reductions: dict[str, float]   # (baseline mean - candidate mean)/baseline

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "repetitions": self.repetitions,
            "entries": {k: v.to_dict() for k, v in self.entries.items()},
            "reductions_vs_baseline": self.reductions,
        }


def _probe_inequality_count(scenario: Scenario,
                            strategy: ConstraintStrategy) -> int:
    from .constraints import braking_constraint
    try:
        return len(build_constraints(strategy, braking_constraint(),
                                     scenario.N))
    except ValueError:
        return -1  # strategy invalid for this horizon


def run_bench(scenario: Scenario, strategies: list[ConstraintStrategy],
              repetitions: int = 3) -> BenchReport:
    """Benchmark strategies on one scenario; first strategy is the baseline.

    Requires repetitions >= 3. A strategy that yields no timed solves in any
    repetition is marked unavailable; the others are still reported.
    """
    if repetitions < 3:
        raise ValueError("benchmark needs at least 3 repetitions")
    if not strategies:
        raise ValueError("need at least one strategy")
    sample_map: dict[str, list[float]] = {}
    iter_map: dict[str, list[int]] = {}
    status_map: dict[str, list[str]] = {}
    for _ in range(repetitions):
        for strat in strategies:
            label = strategy_label(strat)
            scen = dataclasses.replace(scenario, strategy=strat)
            try:
                log, outcome = run_scenario(scen)
                times = [log.solve_ms[i] for i in range(len(log))
                         if log.planned[i] is not None]
                iters = [log.iterations[i] for i in range(len(log))
                         if log.planned[i] is not None]
                status = outcome.status
            except Exception as exc:
                times, iters, status = [], [], f"error: {exc}"
            sample_map.setdefault(label, []).extend(times)
            iter_map.setdefault(label, []).extend(iters)
            status_map.setdefault(label, []).append(status)

    entries: dict[str, BenchEntry] = {}
    for strat in strategies:
        label = strategy_label(strat)
        times = np.array(sample_map[label])
        if len(times) == 0:
            entries[label] = BenchEntry(
                strategy=label,
                inequality_count=_probe_inequality_count(scenario, strat),
                samples=0, mean_ms=math.nan, median_ms=math.nan,
                p95_ms=math.nan, mean_iterations=math.nan,
                statuses=status_map[label], available=False)
            continue
        entries[label] = BenchEntry(
            strategy=label,
            inequality_count=_probe_inequality_count(scenario, strat),
            samples=len(times),
            mean_ms=float(times.mean()),
            median_ms=float(np.median(times)),
            p95_ms=float(np.percentile(times, 95)),
            mean_iterations=float(np.mean(iter_map[label])),
            statuses=status_map[label])

    baseline_label = strategy_label(strategies[0])
    base = entries[baseline_label]
    reductions: dict[str, float] = {}
    for label, e in entries.items():
        if label == baseline_label:
            continue
        if base.available and e.available and base.mean_ms > 0:
            reductions[label] = (base.mean_ms - e.mean_ms) / base.mean_ms
        else:
            reductions[label] = math.nan
    return BenchReport(baseline=baseline_label, repetitions=repetitions,
                       entries=entries, reductions=reductions)


BENCH_CSV_HEADER = ["strategy", "inequality_count", "samples", "mean_ms",
                    "median_ms", "p95_ms", "mean_iterations",
                    "reduction_vs_baseline"]


def write_bench(report: BenchReport, json_path, csv_path=None):
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(BENCH_CSV_HEADER)
            for label, e in report.entries.items():
                red = report.reductions.get(label, 0.0)
                w.writerow([label, e.inequality_count, e.samples,
                            f"{e.mean_ms:.6f}", f"{e.median_ms:.6f}",
                            f"{e.p95_ms:.6f}", f"{e.mean_iterations:.3f}",
                            f"{red:.6f}" if not math.isnan(red) else ""])

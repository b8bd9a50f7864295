"""Empirical feasible-region mapping over a grid of initial states.

Each grid cell runs the full closed loop from that initial state and is
labeled by the outcome; a cell is Feasible only when the run completes with
no violation. Cells are independent, so the sweep distributes them over a
process pool; results are merged by cell index and are identical for any
worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .constraints import GCBF, ConstraintStrategy
from .sim import (COMPLETED, INFEASIBLE_AT, VIOLATED_AT, Scenario,
                  run_scenario, strategy_label)

__all__ = [
    "FEASIBLE",
    "UNSAFE_AT_T0",
    "STARTUP_VIOLATION",
    "GridSpec",
    "FeasibilityMap",
    "RegionComparison",
    "sweep",
    "compare_regions",
    "write_map_csv",
    "write_map_grid",
    "write_comparison",
]

FEASIBLE = "feasible"
UNSAFE_AT_T0 = "unsafe_at_t0"
STARTUP_VIOLATION = "startup_violation"
ERROR = "error"

LABELS = (FEASIBLE, INFEASIBLE_AT, VIOLATED_AT, STARTUP_VIOLATION,
          UNSAFE_AT_T0, ERROR)


@dataclass(frozen=True)
class GridSpec:
    """Axis ranges/resolutions over the first two state dimensions.

    For the ACC plant the axes are (delta_d, delta_v) and `a_f_values` says
    how the acceleration dimension is handled: a single fixed value, or a
    sweep whose projection rule is the conservative conjunction (a cell is
    Feasible only if every swept a_f value is). For the braking plant the
    axes map to (d, v) and `a_f_values` is ignored.
    """

    scenario: Scenario
    delta_d: tuple[float, float] = (-10.0, 10.0)
    delta_v: tuple[float, float] = (-5.0, 5.0)
    n_delta_d: int = 41
    n_delta_v: int = 41
    a_f_values: tuple[float, ...] = (0.0,)
    steps: int = 150

    def __post_init__(self):
        for lo, hi in (self.delta_d, self.delta_v):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError("grid ranges must be finite and increasing")
        if self.n_delta_d < 2 or self.n_delta_v < 2:
            raise ValueError("grid resolution must be >= 2 per axis")
        if self.steps < 1:
            raise ValueError("cell horizon must be >= 1 step")
        if not self.a_f_values:
            raise ValueError("need at least one a_f value")

    def axis_d(self) -> np.ndarray:
        return np.linspace(self.delta_d[0], self.delta_d[1], self.n_delta_d)

    def axis_v(self) -> np.ndarray:
        return np.linspace(self.delta_v[0], self.delta_v[1], self.n_delta_v)


@dataclass
class FeasibilityMap:
    grid: GridSpec
    strategy: str
    labels: np.ndarray          # (n_delta_d, n_delta_v) unicode labels
    first_failure: np.ndarray   # (n_delta_d, n_delta_v) step index, -1 if none

    def feasible_count(self) -> int:
        return int((self.labels == FEASIBLE).sum())

    def label_counts(self) -> dict:
        return {lab: int((self.labels == lab).sum()) for lab in LABELS
                if (self.labels == lab).any()}


def _cell_scenario(grid: GridSpec, strategy: ConstraintStrategy,
                   dd: float, dv: float, a_f: float) -> Scenario:
    x0 = (dd, dv, a_f) if grid.scenario.plant == "acc" else (dd, dv)
    return dataclasses.replace(grid.scenario, x0=x0, strategy=strategy,
                               steps=grid.steps)


def outcome_label(strategy: ConstraintStrategy, outcome) -> str:
    """Map a run outcome to its cell label.

    A GCBF run that violates within the first m-1 real steps failed the
    start-up hypothesis rather than the decay chain, and is labeled
    distinctly.
    """
    if outcome.status == COMPLETED:
        return FEASIBLE
    if (isinstance(strategy, GCBF) and outcome.status == VIOLATED_AT
            and outcome.failed_at is not None
            and 1 <= outcome.failed_at <= strategy.m - 1):
        return STARTUP_VIOLATION
    return outcome.status


def _run_cell(args) -> tuple[int, int, str, int]:
    grid, strategy, i, j = args
    dd = grid.axis_d()[i]
    dv = grid.axis_v()[j]
    s0 = _cell_scenario(grid, strategy, dd, dv, grid.a_f_values[0])
    # unsafe-at-t0 short-circuit: outside the constrained set by definition
    if grid.scenario.plant == "acc":
        vp0 = s0.profile.speed(0.0)
    else:
        vp0 = 0.0
    label, step = FEASIBLE, -1
    for a_f in (grid.a_f_values if grid.scenario.plant == "acc" else (0.0,)):
        scen = _cell_scenario(grid, strategy, dd, dv, a_f)
        if scen.h_of(np.asarray(scen.x0, dtype=float), vp0) > 0.0:
            label, step = UNSAFE_AT_T0, 0
            break
        try:
            _, outcome = run_scenario(scen)
        except Exception:
            label, step = ERROR, -1
            break
        if outcome.status == COMPLETED:
            continue
        step = outcome.failed_at if outcome.failed_at is not None else -1
        label = outcome_label(strategy, outcome)
        break
    return i, j, label, step


def sweep(grid: GridSpec, strategy: ConstraintStrategy,
          workers: int = 1) -> FeasibilityMap:
    """Label every grid cell by its closed-loop outcome under `strategy`.

    Individual cell failures (solver errors included) land in the cell
    label; the sweep itself never aborts. Results are independent of
    `workers`.
    """
    nd, nv = grid.n_delta_d, grid.n_delta_v
    labels = np.full((nd, nv), FEASIBLE, dtype="<U20")
    first_failure = np.full((nd, nv), -1, dtype=int)
    tasks = [(grid, strategy, i, j) for i in range(nd) for j in range(nv)]
    if workers <= 1:
        results = map(_run_cell, tasks)
        for i, j, label, step in results:
            labels[i, j] = label
            first_failure[i, j] = step
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, j, label, step in pool.map(_run_cell, tasks,
                                              chunksize=max(1, len(tasks) // (8 * workers))):
                labels[i, j] = label
                first_failure[i, j] = step
    return FeasibilityMap(grid=grid, strategy=strategy_label(strategy),
                          labels=labels, first_failure=first_failure)


@dataclass
class RegionComparison:
    strategy_a: str
    strategy_b: str
    feasible_a: int
    feasible_b: int
    only_a: int                 # cells feasible under a but not b
    only_b: int
    difference: int             # feasible_a - feasible_b
    diff_raster: np.ndarray     # +1 only-a, -1 only-b, 0 same

    def to_dict(self) -> dict:
        return {
            "strategy_a": self.strategy_a,
            "strategy_b": self.strategy_b,
            "feasible_a": self.feasible_a,
            "feasible_b": self.feasible_b,
            "only_a": self.only_a,
            "only_b": self.only_b,
            "difference": self.difference,
        }


def compare_regions(a: FeasibilityMap, b: FeasibilityMap) -> RegionComparison:
    """Cell-count comparison of two maps over the identical grid."""
    ga, gb = a.grid, b.grid
    same = (ga.delta_d == gb.delta_d and ga.delta_v == gb.delta_v
            and ga.n_delta_d == gb.n_delta_d and ga.n_delta_v == gb.n_delta_v
            and ga.a_f_values == gb.a_f_values and ga.steps == gb.steps)
    if not same:
        raise ValueError("maps were built on different grids")
    fa = a.labels == FEASIBLE
    fb = b.labels == FEASIBLE
    raster = np.zeros(fa.shape, dtype=int)
    raster[fa & ~fb] = 1
    raster[fb & ~fa] = -1
    return RegionComparison(
        strategy_a=a.strategy, strategy_b=b.strategy,
        feasible_a=int(fa.sum()), feasible_b=int(fb.sum()),
        only_a=int((fa & ~fb).sum()), only_b=int((fb & ~fa).sum()),
        difference=int(fa.sum()) - int(fb.sum()), diff_raster=raster)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

MAP_CSV_HEADER = ["delta_d", "delta_v", "label", "first_failure_step"]


def write_map_csv(fmap: FeasibilityMap, path):
    ax_d = fmap.grid.axis_d()
    ax_v = fmap.grid.axis_v()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MAP_CSV_HEADER)
        for i in range(fmap.grid.n_delta_d):
            for j in range(fmap.grid.n_delta_v):
                w.writerow([repr(float(ax_d[i])), repr(float(ax_v[j])),
                            fmap.labels[i, j], int(fmap.first_failure[i, j])])


def write_map_grid(fmap: FeasibilityMap, path):
    """Plot-ready grid: one row per delta_v value, 1 = feasible cells."""
    feas = (fmap.labels == FEASIBLE).astype(int)
    with open(path, "w") as fh:
        fh.write(f"# strategy: {fmap.strategy}\n")
        fh.write("# rows: delta_v ascending; cols: delta_d ascending; "
                 "1 = feasible\n")
        for j in range(fmap.grid.n_delta_v):
            fh.write(" ".join(str(feas[i, j])
                              for i in range(fmap.grid.n_delta_d)) + "\n")


def write_comparison(comp: RegionComparison, json_path, csv_path=None):
    with open(json_path, "w") as fh:
        json.dump(comp.to_dict(), fh, indent=2)
        fh.write("\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i_delta_d", "j_delta_v", "diff"])
            nd, nv = comp.diff_raster.shape
            for i in range(nd):
                for j in range(nv):
                    if comp.diff_raster[i, j]:
                        w.writerow([i, j, int(comp.diff_raster[i, j])])

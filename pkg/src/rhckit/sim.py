"""Closed-loop receding-horizon simulation.

Each real step solves a finite-horizon problem in the virtual time domain
(with the preceding-vehicle acceleration held constant over the horizon),
applies only the first control element to the real plant under the true
disturbance, and logs the result. The loop stops early on an infeasible
solve or on a realized constraint violation; feasibility is the object of
study, so neither is masked unless the scenario explicitly opts into the
relaxed fallback.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .constraints import (GCBF, ConstraintParams, ConstraintStrategy, acc_h,
                          gcbf_decay_bound)
from .dynamics import (AccParams, ConstantProfile, SinusoidProfile,
                       acc_step_array, braking_step_array,
                       check_profile_consistency, desired_distance)
from .ocp import (INFEASIBLE, MAX_ITERATIONS, OPTIMAL, AccModel, BrakingModel,
                  CostSpec, SolverSettings, assemble, shift_warm_start,
                  solve_sqp)

__all__ = [
    "COMPLETED",
    "INFEASIBLE_AT",
    "VIOLATED_AT",
    "VIOLATION_TOL",
    "Scenario",
    "SimLog",
    "RunOutcome",
    "run_scenario",
    "compare_strategies",
    "replay_states",
    "verify_gcbf_chain",
    "ACC_CSV_HEADER",
    "BRAKING_CSV_HEADER",
    "strategy_label",
    "write_log_csv",
    "write_outcome_json",
    "outcome_to_dict",
]

COMPLETED = "completed"
INFEASIBLE_AT = "infeasible_at"
VIOLATED_AT = "violated_at"

VIOLATION_TOL = 1e-6

Profile = Union[SinusoidProfile, ConstantProfile]


@dataclass(frozen=True)
class Scenario:
    """Everything one closed-loop run needs, shareable across workers."""

    plant: str                                # "acc" | "braking"
    x0: tuple[float, ...]
    strategy: ConstraintStrategy
    N: int = 50
    steps: int = 300
    params: AccParams = field(default_factory=AccParams)
    cparams: ConstraintParams = field(default_factory=ConstraintParams)
    profile: Optional[Profile] = None         # acc only
    cost: Optional[CostSpec] = None           # default chosen per plant
    settings: SolverSettings = field(default_factory=SolverSettings)
    braking_dt: float = 0.1
    seed: int = 0
    allow_unsafe_start: bool = False
    relax: bool = False

    def __post_init__(self):
        if self.plant not in ("acc", "braking"):
            raise ValueError(f"unknown plant {self.plant!r}")
        if self.steps < 1:
            raise ValueError("simulation length must be >= 1")
        if self.plant == "acc":
            if len(self.x0) != 3:
                raise ValueError("acc initial state needs 3 entries")
            if self.profile is None:
                object.__setattr__(self, "profile",
                                   SinusoidProfile(dt=self.params.T))
            if abs(self.profile.dt - self.params.T) > 1e-12:
                raise ValueError("profile dt must match plant step time")
        else:
            if len(self.x0) != 2:
                raise ValueError("braking initial state needs 2 entries")

    @property
    def dt(self) -> float:
        return self.params.T if self.plant == "acc" else self.braking_dt

    def cost_spec(self) -> CostSpec:
        if self.cost is not None:
            return self.cost
        return CostSpec.acc_default() if self.plant == "acc" \
            else CostSpec.braking_default()

    def model(self):
        if self.plant == "acc":
            return AccModel(self.params, self.cparams)
        return BrakingModel(self.braking_dt, self.cparams)

    def h_of(self, x: np.ndarray, v_p: float) -> float:
        if self.plant == "acc":
            return acc_h(float(x[0]), float(x[1]), v_p, self.params,
                         self.cparams)
        return -float(x[0])


@dataclass
class SimLog:
    """Per-step record of one closed-loop run.

    Row t captures the real state before the step, the solve at that state,
    and the applied control (nan when the run stopped there). `planned`
    keeps each step's full solved control sequence so the separating-domain
    discipline (only u_{0|t} drives the plant) is checkable after the fact.
    """

    plant: str
    dt: float
    t: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    u_applied: list[float] = field(default_factory=list)
    h: list[float] = field(default_factory=list)
    verdicts: list[str] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    solve_ms: list[float] = field(default_factory=list)
    active_sets: list[tuple[int, ...]] = field(default_factory=list)
    v_p: list[float] = field(default_factory=list)
    a_p: list[float] = field(default_factory=list)
    planned: list[Optional[np.ndarray]] = field(default_factory=list)
    relaxed: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class RunOutcome:
    status: str                    # COMPLETED | INFEASIBLE_AT | VIOLATED_AT
    failed_at: Optional[int]
    steps_completed: int
    mean_cost: float
    max_h: float
    mean_solve_ms: float
    max_solve_ms: float
    startup_ok: Optional[bool]     # GCBF runs: h <= 0 at real steps 1..m-1
    relaxed_steps: int = 0
    error: Optional[str] = None


def _stage_cost(cost: CostSpec, x: np.ndarray, u: float) -> float:
    wx = cost.state_weights
    return float(sum(w * v * v for w, v in zip(wx, x)) +
                 cost.control_weight * u * u)


def run_scenario(s: Scenario) -> tuple[SimLog, RunOutcome]:
    """Run one closed loop; stops early on infeasibility or violation."""
    if s.plant == "acc":
        check_profile_consistency(s.profile, (s.steps + s.N + 1) * s.dt)
    x = np.asarray(s.x0, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("initial state must be finite")
    model = s.model()
    cost = s.cost_spec()
    log = SimLog(plant=s.plant, dt=s.dt)
    warm = None
    warm_ws: tuple[int, ...] = ()
    status = COMPLETED
    failed_at = None
    relaxed_steps = 0

    def log_row(t_idx, x, u0, h_now, verdict, res, vp, ap, relaxed=False):
        log.t.append(t_idx * s.dt)
        log.states.append(x.copy())
        log.u_applied.append(u0)
        log.h.append(h_now)
        log.verdicts.append(verdict)
        log.objective.append(res.objective if res else math.nan)
        log.iterations.append(res.iterations if res else 0)
        log.solve_ms.append(res.solve_time * 1e3 if res else 0.0)
        log.active_sets.append(res.active_set if res else ())
        log.v_p.append(vp)
        log.a_p.append(ap)
        log.planned.append(res.u.copy() if res is not None else None)
        log.relaxed.append(relaxed)

    t_idx = 0
    while t_idx < s.steps:
        if s.plant == "acc":
            vp, ap = s.profile.sample(t_idx * s.dt)
        else:
            vp, ap = 0.0, 0.0
        h_now = s.h_of(x, vp)
        if h_now > VIOLATION_TOL and not (t_idx == 0 and s.allow_unsafe_start):
            status, failed_at = VIOLATED_AT, t_idx
            log_row(t_idx, x, math.nan, h_now, "violated", None, vp, ap)
            break
        ocp = assemble(x, model, cost, s.strategy, s.N,
                       forecast=(vp, ap) if s.plant == "acc" else None)
        res = solve_sqp(ocp, warm_start=warm, settings=s.settings,
                        warm_working_set=warm_ws)
        feasible_iterate = res.max_violation <= s.settings.tol_feas
        relaxed = False
        if res.verdict == OPTIMAL or \
                (res.verdict == MAX_ITERATIONS and feasible_iterate):
            u0 = float(res.u[0])
        elif s.relax:
            # continue on the minimum-violation (slack-softened) plan
            u0 = float(res.u[0])
            relaxed = True
            relaxed_steps += 1
        else:
            status, failed_at = INFEASIBLE_AT, t_idx
            log_row(t_idx, x, math.nan, h_now, res.verdict, res, vp, ap)
            break
        log_row(t_idx, x, u0, h_now, res.verdict, res, vp, ap, relaxed)
        if s.plant == "acc":
            x = acc_step_array(x, u0, ap, vp, s.params)
        else:
            x = braking_step_array(x, u0, s.braking_dt)
        warm = shift_warm_start(res.u)
        warm_ws = res.qp_working_set
        t_idx += 1
    else:
        # ran to length; the terminal state still has to be safe
        if s.plant == "acc":
            vp, ap = s.profile.sample(s.steps * s.dt)
        else:
            vp, ap = 0.0, 0.0
        h_final = s.h_of(x, vp)
        if h_final > VIOLATION_TOL:
            status, failed_at = VIOLATED_AT, s.steps
            log_row(s.steps, x, math.nan, h_final, "violated", None, vp, ap)
        else:
            log_row(s.steps, x, math.nan, h_final, "terminal", None, vp, ap)

    applied = [i for i, u in enumerate(log.u_applied) if math.isfinite(u)]
    mean_cost = float(np.mean([
        _stage_cost(cost, log.states[i], log.u_applied[i]) for i in applied
    ])) if applied else math.nan
    solve_times = [log.solve_ms[i] for i in range(len(log))
                   if log.planned[i] is not None]
    startup_ok = None
    if isinstance(s.strategy, GCBF) and s.strategy.m >= 2:
        needed = range(1, s.strategy.m)
        have = [i for i in needed if i < len(log.h)]
        startup_ok = all(log.h[i] <= VIOLATION_TOL for i in have) \
            if len(have) == len(list(needed)) else None
    outcome = RunOutcome(
        status=status, failed_at=failed_at, steps_completed=len(applied),
        mean_cost=mean_cost,
        max_h=float(np.max(log.h)) if log.h else math.nan,
        mean_solve_ms=float(np.mean(solve_times)) if solve_times else 0.0,
        max_solve_ms=float(np.max(solve_times)) if solve_times else 0.0,
        startup_ok=startup_ok, relaxed_steps=relaxed_steps)
    return log, outcome


def compare_strategies(s: Scenario, strategies: list[ConstraintStrategy]):
    """Run the same scenario under each strategy with aligned disturbances.

    Returns (results, table): `results` maps strategy label to
    (SimLog | None, RunOutcome); per-run errors are captured in the outcome
    rather than aborting the remaining runs.
    """
    results: dict[str, tuple[Optional[SimLog], RunOutcome]] = {}
    table: dict[str, dict] = {}
    for strat in strategies:
        label = strategy_label(strat)
        scen = dataclasses.replace(s, strategy=strat)
        try:
            log, outcome = run_scenario(scen)
        except Exception as exc:  # keep the comparison going
            outcome = RunOutcome(status="error", failed_at=None,
                                 steps_completed=0, mean_cost=math.nan,
                                 max_h=math.nan, mean_solve_ms=math.nan,
                                 max_solve_ms=math.nan, startup_ok=None,
                                 error=str(exc))
            log = None
        results[label] = (log, outcome)
        table[label] = {
            "status": outcome.status,
            "failed_at": outcome.failed_at,
            "mean_cost": outcome.mean_cost,
            "max_h": outcome.max_h,
            "mean_solve_ms": outcome.mean_solve_ms,
        }
    return results, table


def strategy_label(strategy: ConstraintStrategy) -> str:
    from .constraints import MultiStepCBF, Pointwise, SingleStepCBF
    if isinstance(strategy, Pointwise):
        return f"pointwise_{strategy.n_c}"
    if isinstance(strategy, MultiStepCBF):
        return f"multistep_cbf_{strategy.lam:g}"
    if isinstance(strategy, SingleStepCBF):
        return f"singlestep_cbf_{strategy.lam:g}"
    return f"gcbf_m{strategy.m}_{strategy.lam:g}"


def replay_states(s: Scenario, log: SimLog) -> np.ndarray:
    """Re-integrate the logged controls/disturbances; for log-integrity checks."""
    x = np.asarray(s.x0, dtype=float)
    out = [x.copy()]
    for i in range(len(log)):
        if not math.isfinite(log.u_applied[i]):
            break
        if s.plant == "acc":
            x = acc_step_array(x, log.u_applied[i], log.a_p[i], log.v_p[i],
                               s.params)
        else:
            x = braking_step_array(x, log.u_applied[i], s.braking_dt)
        out.append(x.copy())
    return np.array(out)


def verify_gcbf_chain(h_series, lam: float, m: int,
                      tol: float = 1e-9) -> tuple[bool, Optional[int], float]:
    """Check a realized h series against the m-step decay chain.

    Anchors are the first m entries; entry i must not exceed
    gcbf_decay_bound(h[i mod m], lam, m, i) + tol. Returns
    (ok, first offending index, worst excess).
    """
    h_series = list(h_series)
    worst = -math.inf
    first_bad = None
    for i, hv in enumerate(h_series):
        if i < m:
            continue
        bound = gcbf_decay_bound(h_series[i % m], lam, m, i)
        excess = hv - bound
        worst = max(worst, excess)
        if excess > tol and first_bad is None:
            first_bad = i
    return first_bad is None, first_bad, worst


# ---------------------------------------------------------------------------
# Serialization (schemas are pinned; see README)
# ---------------------------------------------------------------------------

ACC_CSV_HEADER = ["t", "delta_d", "delta_v", "a_f", "v_p", "u_applied", "h",
                  "d_true", "d_des", "verdict", "objective", "iterations",
                  "solve_ms", "active_set"]
BRAKING_CSV_HEADER = ["t", "d", "v", "u_applied", "h", "verdict", "objective",
                      "iterations", "solve_ms", "active_set"]


def write_log_csv(log: SimLog, path, params: Optional[AccParams] = None):
    """One row per logged step; ACC logs include derived distance columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if log.plant == "acc":
            p = params if params is not None else AccParams()
            w.writerow(ACC_CSV_HEADER)
            for i in range(len(log)):
                x = log.states[i]
                v_f = log.v_p[i] - x[1]
                d_des = desired_distance(v_f, p)
                w.writerow([
                    f"{log.t[i]:.6f}", repr(float(x[0])), repr(float(x[1])),
                    repr(float(x[2])), repr(log.v_p[i]),
                    repr(float(log.u_applied[i])), repr(float(log.h[i])),
                    repr(float(x[0] + d_des)), repr(float(d_des)),
                    log.verdicts[i], repr(float(log.objective[i])),
                    log.iterations[i], f"{log.solve_ms[i]:.6f}",
                    ";".join(str(j) for j in log.active_sets[i]),
                ])
        else:
            w.writerow(BRAKING_CSV_HEADER)
            for i in range(len(log)):
                x = log.states[i]
                w.writerow([
                    f"{log.t[i]:.6f}", repr(float(x[0])), repr(float(x[1])),
                    repr(float(log.u_applied[i])), repr(float(log.h[i])),
                    log.verdicts[i], repr(float(log.objective[i])),
                    log.iterations[i], f"{log.solve_ms[i]:.6f}",
                    ";".join(str(j) for j in log.active_sets[i]),
                ])


def outcome_to_dict(outcome: RunOutcome) -> dict:
    return {
        "status": outcome.status,
        "failed_at": outcome.failed_at,
        "steps_completed": outcome.steps_completed,
        "mean_cost": outcome.mean_cost,
        "max_h": outcome.max_h,
        "mean_solve_ms": outcome.mean_solve_ms,
        "max_solve_ms": outcome.max_solve_ms,
        "startup_ok": outcome.startup_ok,
        "relaxed_steps": outcome.relaxed_steps,
    }


def write_outcome_json(outcome: RunOutcome, path):
    with open(path, "w") as fh:
        json.dump(outcome_to_dict(outcome), fh, indent=2)
        fh.write("\n")

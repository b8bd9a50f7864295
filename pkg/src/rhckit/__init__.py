"""Receding-horizon control toolkit with barrier constraint strategies."""

from .constraints import (GCBF, ConstraintFunction, ConstraintParams,
                          HorizonConstraintSet, MultiStepCBF, Pointwise,
                          RelativeDegreeNotFound, SingleStepCBF, acc_h,
                          braking_h, build_constraints, gcbf_decay_bound,
                          relative_degree)
from .dynamics import (AccParams, AccState, BrakingState, ConstantProfile,
                       SinusoidProfile, acc_jacobians, acc_step,
                       braking_step, desired_distance)
from .feasmap import FeasibilityMap, GridSpec, compare_regions, sweep
from .ocp import (INFEASIBLE, MAX_ITERATIONS, OPTIMAL, AccModel,
                  BrakingModel, CostSpec, FiniteHorizonOCP, OCPResult,
                  SolverSettings, assemble, brute_force_solve, rollout,
                  solve_sqp)
from .sim import (RunOutcome, Scenario, SimLog, compare_strategies,
                  run_scenario, verify_gcbf_chain)

__version__ = "0.1.0"

__all__ = [
    "AccModel", "AccParams", "AccState", "BrakingModel", "BrakingState",
    "ConstantProfile", "ConstraintFunction", "ConstraintParams", "CostSpec",
    "FeasibilityMap", "FiniteHorizonOCP", "GCBF", "GridSpec",
    "HorizonConstraintSet", "INFEASIBLE", "MAX_ITERATIONS", "MultiStepCBF",
    "OCPResult", "OPTIMAL", "Pointwise", "RelativeDegreeNotFound",
    "RunOutcome", "Scenario", "SimLog", "SingleStepCBF", "SinusoidProfile",
    "SolverSettings", "acc_h", "acc_jacobians", "acc_step", "assemble",
    "braking_h", "braking_step", "brute_force_solve", "build_constraints",
    "compare_regions", "compare_strategies", "desired_distance",
    "gcbf_decay_bound", "relative_degree", "rollout", "run_scenario",
    "solve_sqp", "sweep", "verify_gcbf_chain",
]

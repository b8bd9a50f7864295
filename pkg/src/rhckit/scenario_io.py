"""Scenario files: JSON schema, validation, and (de)serialization.

A scenario document has sections plant, params, constraint_params,
disturbance, strategy, solver, simulation, and (optionally) grid. All
physical quantities are SI (meters, seconds, m/s, m/s^2). Unknown keys are
rejected with a dotted-path diagnostic so typos never silently fall back to
defaults.
"""

from __future__ import annotations

import json
import math
from typing import Optional

from .constraints import (GCBF, ConstraintParams, MultiStepCBF, Pointwise,
                          SingleStepCBF)
from .dynamics import AccParams, ConstantProfile, SinusoidProfile
from .feasmap import GridSpec
from .ocp import CostSpec, SolverSettings
from .sim import Scenario

__all__ = ["ScenarioError", "load_scenario", "load_grid", "parse_scenario",
           "scenario_to_dict", "parse_grid"]


class ScenarioError(ValueError):
    """Configuration error in a scenario document."""


_SECTIONS = {"plant", "params", "constraint_params", "disturbance",
             "strategy", "solver", "simulation", "grid"}

_PARAM_KEYS = {"r", "tau_h", "d0", "T", "Kg", "Tg", "v_fmean"}
_CPARAM_KEYS = {"ds0", "ttc", "a_fmin", "a_fmax"}
_STRATEGY_KEYS = {"name", "n_c", "lambda", "m"}
_SOLVER_KEYS = {"tol_feas", "tol_opt", "max_iter"}
_SIM_KEYS = {"initial_state", "steps", "horizon", "seed", "cost",
             "allow_unsafe_start", "relax", "braking_dt"}
_DISTURBANCE_KEYS = {"type", "speed", "mean", "amplitude", "frequency_hz",
                     "phase"}
_GRID_KEYS = {"delta_d", "delta_v", "n_delta_d", "n_delta_v", "a_f_values",
              "steps"}

_STRATEGY_NAMES = ("pointwise", "multistep_cbf", "singlestep_cbf", "gcbf")


def _reject_unknown(section: dict, allowed: set, path: str):
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(
            f"unknown key(s) {sorted(unknown)} in section '{path}'")


def _number(section: dict, key: str, path: str, default=None):
    if key not in section:
        if default is None:
            raise ScenarioError(f"missing required key '{path}.{key}'")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"'{path}.{key}' must be a number, got {v!r}")
    if not math.isfinite(float(v)):
        raise ScenarioError(f"'{path}.{key}' must be finite")
    return float(v)


def _parse_strategy(section: dict):
    _reject_unknown(section, _STRATEGY_KEYS, "strategy")
    name = section.get("name")
    if name not in _STRATEGY_NAMES:
        raise ScenarioError(
            f"strategy.name must be one of {_STRATEGY_NAMES}, got {name!r}")
    try:
        if name == "pointwise":
            return Pointwise(n_c=int(_number(section, "n_c", "strategy")))
        if name == "multistep_cbf":
            return MultiStepCBF(lam=_number(section, "lambda", "strategy"))
        if name == "singlestep_cbf":
            return SingleStepCBF(lam=_number(section, "lambda", "strategy"))
        return GCBF(lam=_number(section, "lambda", "strategy"),
                    m=int(_number(section, "m", "strategy", default=2)))
    except ValueError as exc:
        raise ScenarioError(f"strategy: {exc}") from exc


def _parse_profile(section: dict, dt: float):
    _reject_unknown(section, _DISTURBANCE_KEYS, "disturbance")
    kind = section.get("type")
    if kind == "constant":
        return ConstantProfile(speed_mps=_number(section, "speed",
                                                 "disturbance"), dt=dt)
    if kind == "sinusoid":
        return SinusoidProfile(
            mean=_number(section, "mean", "disturbance"),
            amplitude=_number(section, "amplitude", "disturbance"),
            freq_hz=_number(section, "frequency_hz", "disturbance"),
            phase=_number(section, "phase", "disturbance", default=0.0),
            dt=dt)
    raise ScenarioError(
        f"disturbance.type must be 'constant' or 'sinusoid', got {kind!r}")


def parse_scenario(doc: dict) -> Scenario:
    """Validate a parsed JSON document and build the runtime Scenario."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    _reject_unknown(doc, _SECTIONS, "<root>")
    plant = doc.get("plant")
    if plant not in ("acc", "braking"):
        raise ScenarioError(f"plant must be 'acc' or 'braking', got {plant!r}")

    psec = doc.get("params", {})
    _reject_unknown(psec, _PARAM_KEYS, "params")
    defaults = AccParams()
    try:
        params = AccParams(**{k: _number(psec, k, "params",
                                         default=getattr(defaults, k))
                              for k in _PARAM_KEYS})
    except ValueError as exc:
        raise ScenarioError(f"params: {exc}") from exc

    csec = doc.get("constraint_params", {})
    _reject_unknown(csec, _CPARAM_KEYS, "constraint_params")
    cdef = ConstraintParams()
    try:
        cparams = ConstraintParams(**{k: _number(csec, k, "constraint_params",
                                                 default=getattr(cdef, k))
                                      for k in _CPARAM_KEYS})
    except ValueError as exc:
        raise ScenarioError(f"constraint_params: {exc}") from exc

    if "strategy" not in doc:
        raise ScenarioError("missing required section 'strategy'")
    strategy = _parse_strategy(doc["strategy"])

    ssec = doc.get("solver", {})
    _reject_unknown(ssec, _SOLVER_KEYS, "solver")
    sdef = SolverSettings()
    try:
        settings = SolverSettings(
            tol_feas=_number(ssec, "tol_feas", "solver", sdef.tol_feas),
            tol_opt=_number(ssec, "tol_opt", "solver", sdef.tol_opt),
            max_iter=int(_number(ssec, "max_iter", "solver", sdef.max_iter)))
    except ValueError as exc:
        raise ScenarioError(f"solver: {exc}") from exc

    sim = doc.get("simulation", {})
    _reject_unknown(sim, _SIM_KEYS, "simulation")
    if "initial_state" not in sim:
        raise ScenarioError("missing required key 'simulation.initial_state'")
    x0 = sim["initial_state"]
    if not (isinstance(x0, list) and
            all(isinstance(v, (int, float)) and not isinstance(v, bool)
                and math.isfinite(float(v)) for v in x0)):
        raise ScenarioError("simulation.initial_state must be a list of "
                            "finite numbers")
    steps = int(_number(sim, "steps", "simulation", default=300))
    horizon = int(_number(sim, "horizon", "simulation", default=50))
    seed = int(_number(sim, "seed", "simulation", default=0))
    braking_dt = _number(sim, "braking_dt", "simulation", default=0.1)
    allow_unsafe = bool(sim.get("allow_unsafe_start", False))
    relax = bool(sim.get("relax", False))
    cost = None
    if "cost" in sim:
        cs = sim["cost"]
        if not (isinstance(cs, dict) and set(cs) <= {"state_weights",
                                                     "control_weight"}):
            raise ScenarioError("simulation.cost needs state_weights and "
                                "control_weight only")
        try:
            cost = CostSpec(state_weights=tuple(float(w)
                                                for w in cs["state_weights"]),
                            control_weight=float(cs["control_weight"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"simulation.cost: {exc}") from exc

    profile = None
    if plant == "acc":
        if "disturbance" not in doc:
            raise ScenarioError("acc scenarios need a 'disturbance' section")
        profile = _parse_profile(doc["disturbance"], dt=params.T)

    try:
        return Scenario(plant=plant, x0=tuple(float(v) for v in x0),
                        strategy=strategy, N=horizon, steps=steps,
                        params=params, cparams=cparams, profile=profile,
                        cost=cost, settings=settings, braking_dt=braking_dt,
                        seed=seed, allow_unsafe_start=allow_unsafe,
                        relax=relax)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def parse_grid(doc: dict, scenario: Scenario) -> GridSpec:
    """Build the sweep GridSpec from the document's grid section."""
    if "grid" not in doc:
        raise ScenarioError("scenario has no 'grid' section")
    g = doc["grid"]
    _reject_unknown(g, _GRID_KEYS, "grid")

    def _range(key, default):
        if key not in g:
            return default
        v = g[key]
        if not (isinstance(v, list) and len(v) == 2):
            raise ScenarioError(f"grid.{key} must be [lo, hi]")
        return (float(v[0]), float(v[1]))

    try:
        return GridSpec(
            scenario=scenario,
            delta_d=_range("delta_d", (-10.0, 10.0)),
            delta_v=_range("delta_v", (-5.0, 5.0)),
            n_delta_d=int(_number(g, "n_delta_d", "grid", default=41)),
            n_delta_v=int(_number(g, "n_delta_v", "grid", default=41)),
            a_f_values=tuple(float(v) for v in g.get("a_f_values", [0.0])),
            steps=int(_number(g, "steps", "grid", default=150)))
    except ValueError as exc:
        raise ScenarioError(f"grid: {exc}") from exc


def load_scenario(path) -> tuple[Scenario, dict]:
    """Load and validate a scenario file; returns (scenario, raw document)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"malformed JSON in {path} at line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(doc), doc


def load_grid(path) -> tuple[GridSpec, Scenario, dict]:
    scenario, doc = load_scenario(path)
    return parse_grid(doc, scenario), scenario, doc


def scenario_to_dict(s: Scenario, grid: Optional[GridSpec] = None) -> dict:
    """Serialize a Scenario back to the document form (round-trippable)."""
    doc: dict = {"plant": s.plant}
    doc["params"] = {k: getattr(s.params, k) for k in sorted(_PARAM_KEYS)}
    doc["constraint_params"] = {k: getattr(s.cparams, k)
                                for k in sorted(_CPARAM_KEYS)}
    strat = s.strategy
    if isinstance(strat, Pointwise):
        doc["strategy"] = {"name": "pointwise", "n_c": strat.n_c}
    elif isinstance(strat, MultiStepCBF):
        doc["strategy"] = {"name": "multistep_cbf", "lambda": strat.lam}
    elif isinstance(strat, SingleStepCBF):
        doc["strategy"] = {"name": "singlestep_cbf", "lambda": strat.lam}
    else:
        doc["strategy"] = {"name": "gcbf", "lambda": strat.lam, "m": strat.m}
    doc["solver"] = {"tol_feas": s.settings.tol_feas,
                     "tol_opt": s.settings.tol_opt,
                     "max_iter": s.settings.max_iter}
    sim: dict = {"initial_state": list(s.x0), "steps": s.steps,
                 "horizon": s.N, "seed": s.seed}
    if s.plant == "braking":
        sim["braking_dt"] = s.braking_dt
    if s.allow_unsafe_start:
        sim["allow_unsafe_start"] = True
    if s.relax:
        sim["relax"] = True
    if s.cost is not None:
        sim["cost"] = {"state_weights": list(s.cost.state_weights),
                       "control_weight": s.cost.control_weight}
    doc["simulation"] = sim
    if s.plant == "acc":
        p = s.profile
        if isinstance(p, ConstantProfile):
            doc["disturbance"] = {"type": "constant", "speed": p.speed_mps}
        else:
            doc["disturbance"] = {"type": "sinusoid", "mean": p.mean,
                                  "amplitude": p.amplitude,
                                  "frequency_hz": p.freq_hz, "phase": p.phase}
    if grid is not None:
        doc["grid"] = {"delta_d": list(grid.delta_d),
                       "delta_v": list(grid.delta_v),
                       "n_delta_d": grid.n_delta_d,
                       "n_delta_v": grid.n_delta_v,
                       "a_f_values": list(grid.a_f_values),
                       "steps": grid.steps}
    return doc

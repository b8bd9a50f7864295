"""Discrete-time plant models for the longitudinal control experiments.

Two plants are provided:

* an adaptive-cruise-control (ACC) vehicle-following model with state
  (delta_d, delta_v, a_f) — gap error against the quadratic-clearance desired
  distance, speed error against the preceding vehicle, and actual ego
  acceleration behind a first-order actuator lag;
* a double-integrator emergency-braking model with state (d, v).

Both step maps are exact discrete-time updates; `acc_jacobians` differentiates
the implemented map exactly (including the bilinear speed/acceleration
coupling inside the gap-error row), so solver gradients are exact for the
dynamics as coded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AccParams",
    "AccState",
    "BrakingState",
    "LinearizedStep",
    "ConstantProfile",
    "SinusoidProfile",
    "acc_step",
    "acc_step_array",
    "acc_jacobians",
    "braking_step",
    "braking_step_array",
    "desired_distance",
    "check_profile_consistency",
]


@dataclass(frozen=True)
class AccParams:
    """ACC plant parameters.

    `v_fmean` is the mean-speed operating point of the Taylor-expanded
    quadratic clearance model. It has no tabulated value in the source data
    for this plant; the configuration default of 15 m/s (mid-range of the
    simulated speeds) is used unless a scenario overrides it.
    """

    r: float = 0.054       # driver-behaviour coefficient, s^2/m
    tau_h: float = 1.0     # time headway, s
    d0: float = 2.9        # stop distance, m
    T: float = 0.1         # step time, s
    Kg: float = 1.05       # actuator-lag gain
    Tg: float = 0.393      # actuator-lag time constant, s
    v_fmean: float = 15.0  # Taylor-expansion mean speed, m/s

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.r, self.tau_h, self.d0,
                                              self.T, self.Kg, self.Tg,
                                              self.v_fmean)):
            raise ValueError("AccParams fields must be finite")
        if self.T <= 0:
            raise ValueError("step time T must be positive")
        if not self.Tg > self.T:
            # 1 - T/Tg must lie in (0, 1) for the lag discretization to be
            # a stable first-order filter.
            raise ValueError("actuator time constant Tg must exceed step time T")
        if self.Kg <= 0:
            raise ValueError("actuator gain Kg must be positive")


@dataclass(frozen=True)
class AccState:
    """ACC state: gap error [m], speed error v_p - v_f [m/s], ego accel [m/s^2]."""

    delta_d: float
    delta_v: float
    a_f: float

    def as_array(self) -> np.ndarray:
        return np.array([self.delta_d, self.delta_v, self.a_f], dtype=float)

    @staticmethod
    def from_array(x: np.ndarray) -> "AccState":
        return AccState(float(x[0]), float(x[1]), float(x[2]))


@dataclass(frozen=True)
class BrakingState:
    """Braking state: distance to obstacle [m] and closing speed [m/s]."""

    d: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.d, self.v], dtype=float)

    @staticmethod
    def from_array(x: np.ndarray) -> "BrakingState":
        return BrakingState(float(x[0]), float(x[1]))


@dataclass(frozen=True)
class LinearizedStep:
    """Exact one-step derivatives: A = dx'/dx, B = dx'/du, q_col = dx'/dq."""

    A: np.ndarray
    B: np.ndarray
    q_col: np.ndarray


def _require_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"non-finite input {name}={v!r}")


def desired_distance(v_f: float, p: AccParams) -> float:
    """Quadratic-clearance desired gap r*v_f*(v_f - v_fmean) + tau_h*v_f + d0."""
    return p.r * v_f * (v_f - p.v_fmean) + p.tau_h * v_f + p.d0


def acc_step_array(x: np.ndarray, u: float, q: float, v_p: float,
                   p: AccParams) -> np.ndarray:
    """One ACC step on a raw state array, no input validation (hot path)."""
    delta_d, delta_v, a_f = x
    v_f = v_p - delta_v
    a13 = -p.tau_h * p.T - p.r * p.T * (2.0 * v_f - p.v_fmean)
    return np.array([
        delta_d + p.T * delta_v + a13 * a_f,
        delta_v - p.T * a_f + p.T * q,
        (1.0 - p.T / p.Tg) * a_f + (p.Kg * p.T / p.Tg) * u,
    ])


def acc_step(x: AccState, u: float, q: float, v_p: float,
             p: AccParams) -> AccState:
    """Advance the ACC plant one step.

    The gap-error coefficient -tau_h*T - r*T*(2*v_f - v_fmean) is evaluated at
    the current state's ego speed v_f = v_p - delta_v; u is the desired
    acceleration command and q the preceding vehicle's acceleration.
    """
    _require_finite(delta_d=x.delta_d, delta_v=x.delta_v, a_f=x.a_f,
                    u=u, q=q, v_p=v_p)
    return AccState.from_array(acc_step_array(x.as_array(), u, q, v_p, p))


def acc_jacobians(x: AccState, v_p: float, p: AccParams) -> LinearizedStep:
    """Exact derivatives of `acc_step` at (x, v_p).

    Because the gap-error coefficient depends on delta_v through
    v_f = v_p - delta_v, the exact d(delta_d')/d(delta_v) picks up an extra
    2*r*T*a_f beyond the frozen-coefficient matrix.
    """
    _require_finite(delta_d=x.delta_d, delta_v=x.delta_v, a_f=x.a_f, v_p=v_p)
    v_f = v_p - x.delta_v
    a13 = -p.tau_h * p.T - p.r * p.T * (2.0 * v_f - p.v_fmean)
    A = np.array([
        [1.0, p.T + 2.0 * p.r * p.T * x.a_f, a13],
        [0.0, 1.0, -p.T],
        [0.0, 0.0, 1.0 - p.T / p.Tg],
    ])
    B = np.array([0.0, 0.0, p.Kg * p.T / p.Tg])
    q_col = np.array([0.0, p.T, 0.0])
    return LinearizedStep(A=A, B=B, q_col=q_col)


def braking_step_array(x: np.ndarray, a: float, T: float) -> np.ndarray:
    """One braking step on a raw state array, no input validation."""
    return np.array([x[0] - T * x[1], x[1] + T * a])


def braking_step(x: BrakingState, a: float, T: float) -> BrakingState:
    """Advance the braking double integrator: d' = d - T*v, v' = v + T*a."""
    if T <= 0:
        raise ValueError("step time T must be positive")
    _require_finite(d=x.d, v=x.v, a=a)
    return BrakingState.from_array(braking_step_array(x.as_array(), a, T))


def braking_jacobians(T: float) -> LinearizedStep:
    """Constant derivatives of the braking step (the plant is affine)."""
    A = np.array([[1.0, -T], [0.0, 1.0]])
    B = np.array([0.0, T])
    return LinearizedStep(A=A, B=B, q_col=np.zeros(2))


# ---------------------------------------------------------------------------
# Preceding-vehicle disturbance profiles
#
# A profile supplies v_p(t) in closed form; a_p(t) is defined as the discrete
# increment rate (v_p(t+T) - v_p(t)) / T so that the speed/acceleration pair
# is exactly consistent with the plant's delta_v update. (The continuous
# derivative would leave an O(T) mismatch in the integration identity.)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SinusoidProfile:
    """v_p(t) = mean + amplitude * sin(2*pi*freq_hz*t + phase)."""

    mean: float = 15.0
    amplitude: float = 3.0
    freq_hz: float = 0.05
    phase: float = 0.0
    dt: float = 0.1

    def speed(self, t: float) -> float:
        return self.mean + self.amplitude * math.sin(
            2.0 * math.pi * self.freq_hz * t + self.phase)

    def accel(self, t: float) -> float:
        return (self.speed(t + self.dt) - self.speed(t)) / self.dt

    def sample(self, t: float) -> tuple[float, float]:
        return self.speed(t), self.accel(t)

    def min_speed(self) -> float:
        return self.mean - abs(self.amplitude)


@dataclass(frozen=True)
class ConstantProfile:
    """Preceding vehicle at constant speed (zero disturbance)."""

    speed_mps: float = 15.0
    dt: float = 0.1

    def speed(self, t: float) -> float:
        return self.speed_mps

    def accel(self, t: float) -> float:
        return 0.0

    def sample(self, t: float) -> tuple[float, float]:
        return self.speed_mps, 0.0

    def min_speed(self) -> float:
        return self.speed_mps


def check_profile_consistency(profile, duration: float, tol: float = 1e-9) -> None:
    """Verify v_p(t+dt) == v_p(t) + dt*a_p(t) over the duration, and v_p >= 0.

    Raises ValueError on the first step that breaks the integration identity
    beyond `tol` or drives the preceding-vehicle speed negative.
    """
    dt = profile.dt
    n = int(round(duration / dt))
    for k in range(n + 1):
        t = k * dt
        v, a = profile.sample(t)
        if v < 0.0:
            raise ValueError(f"profile speed negative at t={t:.3f}: {v}")
        if abs(profile.speed(t + dt) - (v + dt * a)) > tol:
            raise ValueError(f"profile speed/accel inconsistent at t={t:.3f}")

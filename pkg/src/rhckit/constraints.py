"""Constraint functions and horizon constraint-construction strategies.

The safe set is the sublevel set {x | h(x) <= 0}. Four ways of imposing h
over a predicted trajectory (x_{0|t}, ..., x_{N|t}) are supported:

* ``Pointwise(n_c)``      -- h(x_{i|t}) <= 0 for i = 1..n_c
* ``MultiStepCBF(lam)``   -- h(x_{i+1|t}) - (1-lam)*h(x_{i|t}) <= 0, i = 0..N-1
* ``SingleStepCBF(lam)``  -- h(x_{1|t}) - (1-lam)*h(x_{0|t}) <= 0
* ``GCBF(lam, m)``        -- h(x_{m|t}) - (1-lam)^m * h(x_{0|t}) <= 0

Every constructed inequality is a fixed linear combination of h evaluated at
a few virtual steps, which is what `HorizonInequality` stores; the decay
chain implied by the m-step condition is available through
`gcbf_decay_bound` for checking realized trajectories.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .dynamics import AccParams

__all__ = [
    "ConstraintParams",
    "ConstraintFunction",
    "Pointwise",
    "MultiStepCBF",
    "SingleStepCBF",
    "GCBF",
    "ConstraintStrategy",
    "HorizonInequality",
    "HorizonConstraintSet",
    "acc_h",
    "acc_h_grad",
    "acc_constraint",
    "braking_h",
    "braking_h_grad",
    "braking_constraint",
    "build_constraints",
    "gcbf_decay_bound",
    "relative_degree",
    "RelativeDegreeNotFound",
]


@dataclass(frozen=True)
class ConstraintParams:
    """Safe-distance constraint parameters.

    ``ttc`` is kept at its tabulated value of -2.5 s; through the ``-ttc``
    term of the gap constraint its net effect is +2.5*delta_v. Acceleration
    bounds are normalized so that a_fmin < a_fmax (the tabulated pair is
    swapped); a warning is emitted when normalization reorders them.
    """

    ds0: float = 5.0       # safe distance, m
    ttc: float = -2.5      # time-to-collision coefficient, s
    a_fmin: float = -5.0   # m/s^2
    a_fmax: float = 5.0    # m/s^2

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.ds0, self.ttc,
                                              self.a_fmin, self.a_fmax)):
            raise ValueError("ConstraintParams fields must be finite")
        if self.a_fmin > self.a_fmax:
            warnings.warn(
                "acceleration bounds swapped (a_fmin > a_fmax); normalizing",
                stacklevel=2)
            lo, hi = self.a_fmax, self.a_fmin
            object.__setattr__(self, "a_fmin", lo)
            object.__setattr__(self, "a_fmax", hi)
        if self.a_fmin == self.a_fmax:
            raise ValueError("acceleration bounds must differ")


@dataclass(frozen=True)
class ConstraintFunction:
    """Scalar constraint h(x) (feasible iff h <= 0) with its state gradient."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


def acc_h(delta_d: float, delta_v: float, v_p: float,
          p: AccParams, c: ConstraintParams) -> float:
    """Gap constraint for the ACC plant (h <= 0 is safe).

    h = (r*(v_p - delta_v - v_fmean) + tau_h - ttc)*delta_v
        - delta_d - tau_h*v_p + ds0 - d0
    """
    if not all(math.isfinite(v) for v in (delta_d, delta_v, v_p)):
        raise ValueError("non-finite input to acc_h")
    return ((p.r * (v_p - delta_v - p.v_fmean) + p.tau_h - c.ttc) * delta_v
            - delta_d - p.tau_h * v_p + c.ds0 - p.d0)


def acc_h_grad(delta_v: float, v_p: float,
               p: AccParams, c: ConstraintParams) -> np.ndarray:
    """d(acc_h)/d(delta_d, delta_v, a_f); only delta_v makes it nonlinear."""
    return np.array([
        -1.0,
        p.r * (v_p - 2.0 * delta_v - p.v_fmean) + p.tau_h - c.ttc,
        0.0,
    ])


def acc_constraint(v_p: float, p: AccParams,
                   c: ConstraintParams) -> ConstraintFunction:
    """`ConstraintFunction` over raw ACC state arrays at a fixed v_p."""
    def value(x: np.ndarray) -> float:
        return acc_h(float(x[0]), float(x[1]), v_p, p, c)

    def grad(x: np.ndarray) -> np.ndarray:
        return acc_h_grad(float(x[1]), v_p, p, c)

    return ConstraintFunction(value=value, grad=grad)


def braking_h(d: float) -> float:
    """Obstacle-distance constraint: h = -d (safe while the gap is open)."""
    return -d


def braking_h_grad() -> np.ndarray:
    return np.array([-1.0, 0.0])


def braking_constraint() -> ConstraintFunction:
    return ConstraintFunction(value=lambda x: -float(x[0]),
                              grad=lambda x: np.array([-1.0, 0.0]))


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


def _check_lambda(lam: float) -> None:
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")


@dataclass(frozen=True)
class Pointwise:
    """Direct inequalities on each of the first n_c predicted steps."""

    n_c: int

    def __post_init__(self):
        if self.n_c < 1:
            raise ValueError("n_c must be >= 1")


@dataclass(frozen=True)
class MultiStepCBF:
    """Barrier decay imposed between every adjacent pair of virtual steps."""

    lam: float

    def __post_init__(self):
        _check_lambda(self.lam)


@dataclass(frozen=True)
class SingleStepCBF:
    """Barrier decay imposed on the first virtual step only."""

    lam: float

    def __post_init__(self):
        _check_lambda(self.lam)


@dataclass(frozen=True)
class GCBF:
    """m-step barrier decay: h(x_{m|t}) <= (1-lam)^m * h(x_{0|t}).

    `m` is the constraint's relative degree with respect to the control
    input; m = 1 reduces to `SingleStepCBF` and lam = 1 reduces to a single
    pointwise inequality at step m.
    """

    lam: float
    m: int = 2

    def __post_init__(self):
        _check_lambda(self.lam)
        if self.m < 1:
            raise ValueError("relative degree m must be >= 1")


ConstraintStrategy = Union[Pointwise, MultiStepCBF, SingleStepCBF, GCBF]


@dataclass(frozen=True)
class HorizonInequality:
    """One scalar inequality sum_k weights[k]*h(x_{steps[k]|t}) <= 0."""

    steps: tuple[int, ...]
    weights: tuple[float, ...]

    def value(self, h_seq: Sequence[float]) -> float:
        return float(sum(w * h_seq[s] for s, w in zip(self.steps, self.weights)))


@dataclass(frozen=True)
class HorizonConstraintSet:
    """All trajectory inequalities produced by one strategy over horizon N."""

    h: ConstraintFunction
    horizon: int
    inequalities: tuple[HorizonInequality, ...]

    def __len__(self) -> int:
        return len(self.inequalities)

    def evaluate(self, h_seq: Sequence[float]) -> np.ndarray:
        """Inequality values from per-step h values h_seq[i] = h(x_{i|t})."""
        return np.array([g.value(h_seq) for g in self.inequalities])

    def evaluate_trajectory(self, traj: np.ndarray) -> np.ndarray:
        """Inequality values from a (N+1, nx) state trajectory via self.h."""
        h_seq = [self.h.value(traj[i]) for i in range(self.horizon + 1)]
        return self.evaluate(h_seq)


def build_constraints(strategy: ConstraintStrategy, h: ConstraintFunction,
                      N: int) -> HorizonConstraintSet:
    """Construct the trajectory inequality set for one strategy.

    Counts: n_c for Pointwise, N for MultiStepCBF, one for SingleStepCBF and
    GCBF. GCBF requires m <= N so that the constrained step exists inside the
    prediction horizon.
    """
    if N < 1:
        raise ValueError("horizon N must be >= 1")
    if isinstance(strategy, Pointwise):
        if strategy.n_c > N:
            raise ValueError(f"n_c={strategy.n_c} exceeds horizon N={N}")
        ineqs = tuple(HorizonInequality((i,), (1.0,))
                      for i in range(1, strategy.n_c + 1))
    elif isinstance(strategy, MultiStepCBF):
        decay = 1.0 - strategy.lam
        ineqs = tuple(HorizonInequality((i + 1, i), (1.0, -decay))
                      for i in range(N))
    elif isinstance(strategy, SingleStepCBF):
        ineqs = (HorizonInequality((1, 0), (1.0, -(1.0 - strategy.lam))),)
    elif isinstance(strategy, GCBF):
        if strategy.m > N:
            raise ValueError(f"GCBF step m={strategy.m} exceeds horizon N={N}")
        decay = (1.0 - strategy.lam) ** strategy.m
        ineqs = (HorizonInequality((strategy.m, 0), (1.0, -decay)),)
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    return HorizonConstraintSet(h=h, horizon=N, inequalities=ineqs)


def gcbf_decay_bound(h0: float, lam: float, m: int, i: int) -> float:
    """Upper bound on h at step i implied by the m-step decay condition.

    `h0` is the h value at the anchor step s = i mod m; chaining the m-step
    inequality from that anchor gives h(x_{t+i}) <= (1-lam)^(i-s) * h0.
    """
    _check_lambda(lam)
    if m < 1:
        raise ValueError("m must be >= 1")
    if i < 0:
        raise ValueError("i must be >= 0")
    return (1.0 - lam) ** (i - (i % m)) * h0


# ---------------------------------------------------------------------------
# Relative-degree analysis
# ---------------------------------------------------------------------------


class RelativeDegreeNotFound(Exception):
    """No sensitivity of h to the first control within max_order steps."""

    def __init__(self, max_order: int):
        super().__init__(
            f"h(x_i) insensitive to u_0 for all i <= {max_order}")
        self.max_order = max_order


def relative_degree(step_map: Callable[[np.ndarray, float], np.ndarray],
                    h: Callable[[np.ndarray], float],
                    probe_states: Sequence[np.ndarray],
                    max_order: int,
                    u_nominal: float = 0.0,
                    tol: float = 1e-8,
                    fd_step: float = 1e-4) -> int:
    """Smallest i with |dh(x_{i|t})/du_{0|t}| > tol at some probe state.

    x_{i|t} is the i-step rollout of `step_map` with all controls held at
    `u_nominal`; the derivative is taken by central differences on the first
    control only. Raises `RelativeDegreeNotFound` if every probed derivative
    up to `max_order` vanishes.
    """
    if len(probe_states) == 0:
        raise ValueError("probe_states must be nonempty")
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    plus = [step_map(np.asarray(x, dtype=float), u_nominal + fd_step)
            for x in probe_states]
    minus = [step_map(np.asarray(x, dtype=float), u_nominal - fd_step)
             for x in probe_states]
    for i in range(1, max_order + 1):
        for xp, xm in zip(plus, minus):
            deriv = (h(xp) - h(xm)) / (2.0 * fd_step)
            if abs(deriv) > tol:
                return i
        plus = [step_map(x, u_nominal) for x in plus]
        minus = [step_map(x, u_nominal) for x in minus]
    raise RelativeDegreeNotFound(max_order)

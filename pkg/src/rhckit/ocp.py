"""Finite-horizon optimal control problems in single-shooting form.

The decision vector is the control sequence only; states are recovered by
rolling out the plant, so the dynamics equalities hold by construction and
the trajectory inequalities become nonlinear constraints on the controls.
Problems are solved by an SQP method with a Gauss-Newton Hessian of the
quadratic stage cost, a primal active-set QP subproblem, an l1 merit line
search, and an l1 feasibility-restoration phase that backs the explicit
infeasibility verdict.

A grid-enumeration oracle (`brute_force_solve`) is provided for desk-scale
cross-checks of the SQP results.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .constraints import (ConstraintParams, ConstraintStrategy,
                          HorizonConstraintSet, acc_constraint,
                          braking_constraint, build_constraints)
from .dynamics import AccParams

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

__all__ = [
    "OPTIMAL",
    "INFEASIBLE",
    "MAX_ITERATIONS",
    "CostSpec",
    "SolverSettings",
    "AccModel",
    "BrakingModel",
    "FiniteHorizonOCP",
    "OCPResult",
    "RolloutDiverged",
    "assemble",
    "rollout",
    "RolloutResult",
    "solve_sqp",
    "brute_force_solve",
    "shift_warm_start",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"


class RolloutDiverged(RuntimeError):
    """A rollout produced a non-finite intermediate state."""


@dataclass(frozen=True)
class CostSpec:
    """Diagonal quadratic stage cost sum_k wx[k]*x[k]^2 + wu*u^2."""

    state_weights: tuple[float, ...]
    control_weight: float

    def __post_init__(self):
        ws = (*self.state_weights, self.control_weight)
        if not all(math.isfinite(w) and w >= 0.0 for w in ws):
            raise ValueError("cost weights must be finite and nonnegative")
        if not any(w > 0.0 for w in ws):
            raise ValueError("at least one cost weight must be positive")

    @staticmethod
    def acc_default() -> "CostSpec":
        return CostSpec(state_weights=(0.02, 0.025, 0.0), control_weight=5.0)

    @staticmethod
    def braking_default() -> "CostSpec":
        return CostSpec(state_weights=(0.0, 0.0), control_weight=1.0)


@dataclass(frozen=True)
class SolverSettings:
    """SQP tolerances and line-search parameters.

    Complementarity is accepted at tol_opt scaled by (1 + max multiplier);
    stationarity and feasibility use tol_opt / tol_feas directly.
    """

    tol_feas: float = 1e-6
    tol_opt: float = 1e-6
    max_iter: int = 100
    ls_backtrack: float = 0.5
    ls_armijo: float = 1e-4
    ls_max_steps: int = 30
    qp_reg: float = 1e-8
    elastic_penalty: float = 1e4
    merit_penalty_init: float = 10.0

    def __post_init__(self):
        if self.tol_feas <= 0 or self.tol_opt <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0.0 < self.ls_backtrack < 1.0):
            raise ValueError("backtracking factor must lie in (0, 1)")


@dataclass(frozen=True)
class AccModel:
    params: AccParams
    cparams: ConstraintParams


@dataclass(frozen=True)
class BrakingModel:
    T: float
    cparams: ConstraintParams

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("step time T must be positive")


Model = Union[AccModel, BrakingModel]


# ---------------------------------------------------------------------------
# Rollout kernels. Controls are the only inputs; the forward sensitivity
# S[i] = dx_i/du is propagated alongside the states and the Gauss-Newton
# pieces are assembled from it with rank-structured BLAS products.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _acc_vals_kernel(x0, u, vp, q, T, tau_h, r, v_fmean, af_alpha, af_beta,
                     wdd, wdv, waf, wu, ttc, hconst):
    N = u.shape[0]
    traj = np.empty((N + 1, 3))
    h_seq = np.empty(N + 1)
    dd, dv, af = x0[0], x0[1], x0[2]
    J = 0.0
    traj[0, 0] = dd
    traj[0, 1] = dv
    traj[0, 2] = af
    for i in range(N):
        J += wdd * dd * dd + wdv * dv * dv + waf * af * af + wu * u[i] * u[i]
        vf = vp[i] - dv
        a13 = -tau_h * T - r * T * (2.0 * vf - v_fmean)
        dd_n = dd + T * dv + a13 * af
        dv_n = dv - T * af + T * q
        af_n = af_alpha * af + af_beta * u[i]
        dd, dv, af = dd_n, dv_n, af_n
        traj[i + 1, 0] = dd
        traj[i + 1, 1] = dv
        traj[i + 1, 2] = af
    for i in range(N + 1):
        dd_i = traj[i, 0]
        dv_i = traj[i, 1]
        h_seq[i] = ((r * (vp[i] - dv_i - v_fmean) + tau_h - ttc) * dv_i
                    - dd_i - tau_h * vp[i] + hconst)
    return traj, h_seq, J


@njit(cache=True)
def _acc_grad_kernel(x0, u, vp, q, T, tau_h, r, v_fmean, af_alpha, af_beta,
                     wdd, wdv, waf, wu, ttc, hconst):
    N = u.shape[0]
    traj = np.empty((N + 1, 3))
    h_seq = np.empty(N + 1)
    S = np.zeros((N + 1, 3, N))
    dd, dv, af = x0[0], x0[1], x0[2]
    J = 0.0
    traj[0, 0] = dd
    traj[0, 1] = dv
    traj[0, 2] = af
    for i in range(N):
        J += wdd * dd * dd + wdv * dv * dv + waf * af * af + wu * u[i] * u[i]
        vf = vp[i] - dv
        a13 = -tau_h * T - r * T * (2.0 * vf - v_fmean)
        a12 = T + 2.0 * r * T * af
        # sensitivity update: only controls u_0..u_{i-1} reach state i
        for j in range(i):
            s0 = S[i, 0, j]
            s1 = S[i, 1, j]
            s2 = S[i, 2, j]
            S[i + 1, 0, j] = s0 + a12 * s1 + a13 * s2
            S[i + 1, 1, j] = s1 - T * s2
            S[i + 1, 2, j] = af_alpha * s2
        S[i + 1, 2, i] = af_beta
        dd_n = dd + T * dv + a13 * af
        dv_n = dv - T * af + T * q
        af_n = af_alpha * af + af_beta * u[i]
        dd, dv, af = dd_n, dv_n, af_n
        traj[i + 1, 0] = dd
        traj[i + 1, 1] = dv
        traj[i + 1, 2] = af
    for i in range(N + 1):
        dd_i = traj[i, 0]
        dv_i = traj[i, 1]
        h_seq[i] = ((r * (vp[i] - dv_i - v_fmean) + tau_h - ttc) * dv_i
                    - dd_i - tau_h * vp[i] + hconst)
    # Gauss-Newton pieces per state row of the stacked sensitivities
    D = np.ascontiguousarray(S[:N, 0, :])
    V = np.ascontiguousarray(S[:N, 1, :])
    A2 = np.ascontiguousarray(S[:N, 2, :])
    H = 2.0 * (wdd * np.dot(D.T, D) + wdv * np.dot(V.T, V)
               + waf * np.dot(A2.T, A2))
    gJ = 2.0 * (wdd * np.dot(D.T, np.ascontiguousarray(traj[:N, 0]))
                + wdv * np.dot(V.T, np.ascontiguousarray(traj[:N, 1]))
                + waf * np.dot(A2.T, np.ascontiguousarray(traj[:N, 2])))
    for i in range(N):
        H[i, i] += 2.0 * wu
        gJ[i] += 2.0 * wu * u[i]
    return traj, h_seq, J, gJ, H, S


@njit(cache=True)
def _braking_vals_kernel(x0, u, T, wd, wv, wu):
    N = u.shape[0]
    traj = np.empty((N + 1, 2))
    h_seq = np.empty(N + 1)
    d, v = x0[0], x0[1]
    J = 0.0
    traj[0, 0] = d
    traj[0, 1] = v
    h_seq[0] = -d
    for i in range(N):
        J += wd * d * d + wv * v * v + wu * u[i] * u[i]
        d, v = d - T * v, v + T * u[i]
        traj[i + 1, 0] = d
        traj[i + 1, 1] = v
        h_seq[i + 1] = -d
    return traj, h_seq, J


@njit(cache=True)
def _braking_grad_kernel(x0, u, T, wd, wv, wu):
    N = u.shape[0]
    traj = np.empty((N + 1, 2))
    h_seq = np.empty(N + 1)
    S = np.zeros((N + 1, 2, N))
    d, v = x0[0], x0[1]
    J = 0.0
    traj[0, 0] = d
    traj[0, 1] = v
    h_seq[0] = -d
    for i in range(N):
        J += wd * d * d + wv * v * v + wu * u[i] * u[i]
        for j in range(i):
            s0 = S[i, 0, j]
            s1 = S[i, 1, j]
            S[i + 1, 0, j] = s0 - T * s1
            S[i + 1, 1, j] = s1
        S[i + 1, 1, i] = T
        d, v = d - T * v, v + T * u[i]
        traj[i + 1, 0] = d
        traj[i + 1, 1] = v
        h_seq[i + 1] = -d
    D = np.ascontiguousarray(S[:N, 0, :])
    V = np.ascontiguousarray(S[:N, 1, :])
    H = 2.0 * (wd * np.dot(D.T, D) + wv * np.dot(V.T, V))
    gJ = 2.0 * (wd * np.dot(D.T, np.ascontiguousarray(traj[:N, 0]))
                + wv * np.dot(V.T, np.ascontiguousarray(traj[:N, 1])))
    for i in range(N):
        H[i, i] += 2.0 * wu
        gJ[i] += 2.0 * wu * u[i]
    return traj, h_seq, J, gJ, H, S


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------


@dataclass
class FiniteHorizonOCP:
    """One virtual-time-domain problem: min cost s.t. trajectory inequalities.

    `weightmat` encodes the constraint set as a dense (n_ineq, N+1) matrix W
    so that the inequality values are W @ h_seq for the per-step constraint
    values h_seq.
    """

    plant: str                      # "acc" | "braking"
    x0: np.ndarray
    N: int
    nx: int
    cost: CostSpec
    constraints: HorizonConstraintSet
    weightmat: np.ndarray
    u_min: float
    u_max: float
    params: Optional[AccParams] = None
    cparams: Optional[ConstraintParams] = None
    vp_schedule: Optional[np.ndarray] = None   # acc: v_p at each virtual step
    q_hat: float = 0.0                         # acc: constant a_p forecast
    T: float = 0.1                             # braking step time

    @property
    def n_ineq(self) -> int:
        return self.weightmat.shape[0]

    def _cost_weights(self):
        wx = self.cost.state_weights
        return (*wx, self.cost.control_weight)

    def rollout_values(self, u: np.ndarray):
        """(trajectory, per-step h, cost) with no sensitivities."""
        if self.plant == "acc":
            p = self.params
            c = self.cparams
            wdd, wdv, waf, wu = self._cost_weights()
            out = _acc_vals_kernel(self.x0, u, self.vp_schedule, self.q_hat,
                                   p.T, p.tau_h, p.r, p.v_fmean,
                                   1.0 - p.T / p.Tg, p.Kg * p.T / p.Tg,
                                   wdd, wdv, waf, wu, c.ttc, c.ds0 - p.d0)
        else:
            wd, wv, wu = self._cost_weights()
            out = _braking_vals_kernel(self.x0, u, self.T, wd, wv, wu)
        if not math.isfinite(out[2]) or not np.isfinite(out[0]).all():
            raise RolloutDiverged("non-finite state in rollout")
        return out

    def rollout_full(self, u: np.ndarray):
        """(trajectory, h, cost, cost gradient, GN Hessian, sensitivities)."""
        if self.plant == "acc":
            p = self.params
            c = self.cparams
            wdd, wdv, waf, wu = self._cost_weights()
            out = _acc_grad_kernel(self.x0, u, self.vp_schedule, self.q_hat,
                                   p.T, p.tau_h, p.r, p.v_fmean,
                                   1.0 - p.T / p.Tg, p.Kg * p.T / p.Tg,
                                   wdd, wdv, waf, wu, c.ttc, c.ds0 - p.d0)
        else:
            wd, wv, wu = self._cost_weights()
            out = _braking_grad_kernel(self.x0, u, self.T, wd, wv, wu)
        if not math.isfinite(out[2]) or not np.isfinite(out[0]).all():
            raise RolloutDiverged("non-finite state in rollout")
        return out

    def h_gradients(self, traj: np.ndarray) -> np.ndarray:
        """dh/dx at every trajectory point, shape (N+1, nx)."""
        n = self.N + 1
        out = np.zeros((n, self.nx))
        if self.plant == "acc":
            p = self.params
            c = self.cparams
            out[:, 0] = -1.0
            out[:, 1] = (p.r * (self.vp_schedule - 2.0 * traj[:, 1] - p.v_fmean)
                         + p.tau_h - c.ttc)
        else:
            out[:, 0] = -1.0
        return out

    def constraint_values(self, h_seq: np.ndarray) -> np.ndarray:
        return self.weightmat @ h_seq

    def constraint_jacobian(self, traj: np.ndarray, S: np.ndarray) -> np.ndarray:
        """d(inequalities)/du, shape (n_ineq, N)."""
        hg = self.h_gradients(traj)
        # dh_i/du = hg[i] . S[i]
        dh_du = np.einsum("ia,iaj->ij", hg, S)
        return self.weightmat @ dh_du


def assemble(x0: np.ndarray, model: Model, cost: CostSpec,
             strategy: ConstraintStrategy, N: int,
             forecast: Optional[tuple[float, float]] = None) -> FiniteHorizonOCP:
    """Build a single-shooting OCP over horizon N.

    For the ACC plant `forecast` is (v_p at the current step, constant
    preceding-vehicle acceleration held over the whole virtual horizon); the
    virtual v_p schedule integrates that constant. The braking plant has no
    disturbance and ignores `forecast`.
    """
    from .constraints import GCBF as _GCBF

    x0 = np.asarray(x0, dtype=float)
    if not np.isfinite(x0).all():
        raise ValueError("initial state must be finite")
    if isinstance(strategy, _GCBF) and strategy.m > len(x0):
        raise ValueError(
            f"GCBF step m={strategy.m} exceeds the state dimension")
    if isinstance(model, AccModel):
        if x0.shape != (3,):
            raise ValueError(f"acc state must have 3 entries, got {x0.shape}")
        if forecast is None:
            raise ValueError("acc OCP requires a (v_p, a_p) forecast")
        if len(cost.state_weights) != 3:
            raise ValueError("acc cost needs 3 state weights")
        vp0, q_hat = float(forecast[0]), float(forecast[1])
        p = model.params
        hcf = acc_constraint(vp0, p, model.cparams)
        cset = build_constraints(strategy, hcf, N)
        vp_schedule = vp0 + p.T * q_hat * np.arange(N + 1)
        ocp = FiniteHorizonOCP(
            plant="acc", x0=x0, N=N, nx=3, cost=cost, constraints=cset,
            weightmat=_weight_matrix(cset, N), u_min=model.cparams.a_fmin,
            u_max=model.cparams.a_fmax, params=p, cparams=model.cparams,
            vp_schedule=vp_schedule, q_hat=q_hat, T=p.T)
    elif isinstance(model, BrakingModel):
        if x0.shape != (2,):
            raise ValueError(f"braking state must have 2 entries, got {x0.shape}")
        if len(cost.state_weights) != 2:
            raise ValueError("braking cost needs 2 state weights")
        cset = build_constraints(strategy, braking_constraint(), N)
        ocp = FiniteHorizonOCP(
            plant="braking", x0=x0, N=N, nx=2, cost=cost, constraints=cset,
            weightmat=_weight_matrix(cset, N), u_min=model.cparams.a_fmin,
            u_max=model.cparams.a_fmax, cparams=model.cparams, T=model.T)
    else:
        raise TypeError(f"unknown model {model!r}")
    return ocp


def _weight_matrix(cset: HorizonConstraintSet, N: int) -> np.ndarray:
    W = np.zeros((len(cset), N + 1))
    for j, g in enumerate(cset.inequalities):
        for s, w in zip(g.steps, g.weights):
            W[j, s] += w
    return W


@dataclass
class RolloutResult:
    trajectory: np.ndarray         # (N+1, nx)
    cost: float
    cost_grad: np.ndarray          # (N,)
    constraint_values: np.ndarray  # (n_ineq,)
    constraint_jac: np.ndarray     # (n_ineq, N)
    h_seq: np.ndarray              # (N+1,)


def rollout(ocp: FiniteHorizonOCP, u: np.ndarray) -> RolloutResult:
    """Roll the controls through the plant; values and exact gradients."""
    u = np.asarray(u, dtype=float)
    if u.shape != (ocp.N,):
        raise ValueError(f"control sequence must have length {ocp.N}")
    traj, h_seq, J, gJ, _, S = ocp.rollout_full(u)
    return RolloutResult(trajectory=traj, cost=J, cost_grad=gJ,
                         constraint_values=ocp.constraint_values(h_seq),
                         constraint_jac=ocp.constraint_jacobian(traj, S),
                         h_seq=h_seq)


# ---------------------------------------------------------------------------
# SQP solver
# ---------------------------------------------------------------------------


@dataclass
class OCPResult:
    verdict: str                    # OPTIMAL | INFEASIBLE | MAX_ITERATIONS
    u: np.ndarray
    trajectory: np.ndarray
    objective: float
    max_violation: float
    kkt_residual: float
    iterations: int
    solve_time: float
    multipliers: np.ndarray         # nonlinear inequality multipliers
    bound_mult_lower: np.ndarray
    bound_mult_upper: np.ndarray
    active_set: tuple[int, ...]     # indices of binding inequalities
    qp_working_set: tuple[int, ...] = ()


def shift_warm_start(u_prev: np.ndarray) -> np.ndarray:
    """Shift a solved sequence one step forward, repeating the last control."""
    u_prev = np.asarray(u_prev, dtype=float)
    return np.concatenate([u_prev[1:], u_prev[-1:]])


def _violation(c: np.ndarray) -> tuple[float, float]:
    if len(c) == 0:
        return 0.0, 0.0
    pos = np.maximum(c, 0.0)
    return float(pos.sum()), float(pos.max())


def _kkt_residual(gJ, Jc, mu, nu_lo, nu_hi) -> float:
    """Scaled stationarity residual of the Lagrangian gradient.

    The raw infinity norm is divided by (1 + gradient scale + multiplier
    scale), the usual relative measure; tolerances apply to this value.
    """
    raw = gJ + Jc.T @ mu - nu_lo + nu_hi if len(mu) else gJ - nu_lo + nu_hi
    scale = 1.0 + float(np.abs(gJ).max(initial=0.0)) \
        + float(mu.max(initial=0.0)) + float(nu_lo.max(initial=0.0)) \
        + float(nu_hi.max(initial=0.0))
    return float(np.abs(raw).max(initial=0.0)) / scale


def _solve_subproblem(H, gJ, c, Jc, lo, hi, settings, elastic, ws):
    """Assemble and solve the local QP; returns step, multipliers, slacks.

    Row layout is shared between the plain and elastic forms (nonlinear
    rows, then lower/upper bound rows), so a working set carried across
    iterations, modes, and receding-horizon steps stays meaningful.
    """
    from .qp import solve_qp

    n = len(gJ)
    m = len(c)
    reg = settings.qp_reg
    if not elastic:
        P = H + reg * np.eye(n)
        q = gJ
        G = np.vstack([Jc, -np.eye(n), np.eye(n)])
        hvec = np.concatenate([np.maximum(-c, 0.0), -lo, hi])
        res = solve_qp(P, q, G, hvec, np.zeros(n),
                       working_set=[w for w in ws if w < m + 2 * n])
        d = res.z
        mu = res.multipliers[:m]
        nu_lo = res.multipliers[m:m + n]
        nu_hi = res.multipliers[m + n:m + 2 * n]
        return d, np.zeros(m), mu, nu_lo, nu_hi, res.working_set
    # elastic: variables (d, s); rows [Jc d - s <= -c; bounds; -s <= 0]
    nz = n + m
    P = np.zeros((nz, nz))
    P[:n, :n] = H + reg * np.eye(n)
    P[n:, n:] = reg * np.eye(m)
    q = np.concatenate([gJ, np.full(m, settings.elastic_penalty)])
    G = np.zeros((m + 2 * n + m, nz))
    G[:m, :n] = Jc
    G[:m, n:] = -np.eye(m)
    G[m:m + n, :n] = -np.eye(n)
    G[m + n:m + 2 * n, :n] = np.eye(n)
    G[m + 2 * n:, n:] = -np.eye(m)
    hvec = np.concatenate([-c, -lo, hi, np.zeros(m)])
    # start exactly on the natural face: violated rows tight with their
    # slack carrying the violation, satisfied rows with slack pinned at
    # zero; the active-set loop then mostly drops rows instead of
    # discovering them one at a time
    s0 = np.maximum(c, 0.0)
    z0 = np.concatenate([np.zeros(n), s0])
    seed = [j for j in range(m) if c[j] > 0.0]
    seed += [m + 2 * n + j for j in range(m) if c[j] <= 0.0]
    seed += [w for w in ws if m <= w < m + 2 * n]
    res = solve_qp(P, q, G, hvec, z0, working_set=seed)
    d = res.z[:n]
    slack = res.z[n:]
    mu = res.multipliers[:m]
    nu_lo = res.multipliers[m:m + n]
    nu_hi = res.multipliers[m + n:m + 2 * n]
    return d, slack, mu, nu_lo, nu_hi, \
        tuple(w for w in res.working_set if w < m + 2 * n)


def _restore_feasibility(ocp, U, settings, max_rounds=40):
    """Minimize the l1 constraint violation from U; returns (U, theta)."""
    from .qp import solve_qp

    n = ocp.N
    lo_u, hi_u = ocp.u_min, ocp.u_max
    theta = math.inf
    for _ in range(max_rounds):
        traj, h_seq, _, _, _, S = ocp.rollout_full(U)
        c = ocp.constraint_values(h_seq)
        Jc = ocp.constraint_jacobian(traj, S)
        theta, _ = _violation(c)
        if theta <= settings.tol_feas:
            return U, theta
        m = len(c)
        nz = n + m
        P = settings.qp_reg * np.eye(nz)
        q = np.concatenate([np.zeros(n), np.ones(m)])
        G = np.zeros((m + 2 * n + m, nz))
        G[:m, :n] = Jc
        G[:m, n:] = -np.eye(m)
        G[m:m + n, :n] = -np.eye(n)
        G[m + n:m + 2 * n, :n] = np.eye(n)
        G[m + 2 * n:, n:] = -np.eye(m)
        hvec = np.concatenate([-c, U - lo_u, hi_u - U, np.zeros(m)])
        z0 = np.concatenate([np.zeros(n), np.maximum(c, 0.0)])
        seed = [j for j in range(m) if c[j] > 0.0]
        seed += [m + 2 * n + j for j in range(m) if c[j] <= 0.0]
        res = solve_qp(P, q, G, hvec, z0, working_set=seed)
        d = res.z[:n]
        predicted = float(res.z[n:].sum()) - theta
        if predicted > -1e-14:
            return U, theta
        alpha = 1.0
        improved = False
        for _ in range(settings.ls_max_steps):
            U_try = U + alpha * d
            try:
                _, h_try, _ = ocp.rollout_values(U_try)
            except RolloutDiverged:
                alpha *= settings.ls_backtrack
                continue
            theta_try, _ = _violation(ocp.constraint_values(h_try))
            if theta_try <= theta + settings.ls_armijo * alpha * predicted:
                U = U_try
                improved = True
                break
            alpha *= settings.ls_backtrack
        if not improved:
            return U, theta
    return U, theta


def solve_sqp(ocp: FiniteHorizonOCP, warm_start: Optional[np.ndarray] = None,
              settings: Optional[SolverSettings] = None,
              warm_working_set: tuple[int, ...] = ()) -> OCPResult:
    """Solve the OCP; never labels an infeasible point Optimal.

    The Infeasible verdict is issued only after the restoration phase
    converges with the l1 violation still above the feasibility tolerance.
    A MaxIterations verdict carries the last (merit-best) iterate.
    `warm_working_set` seeds the first QP's active set (typically the
    previous receding-horizon step's `qp_working_set`).
    """
    t0 = time.perf_counter()
    s = settings if settings is not None else SolverSettings()
    N = ocp.N
    if warm_start is not None:
        warm = np.asarray(warm_start, dtype=float)
        if warm.shape != (N,):
            raise ValueError(f"warm start must have length {N}")
        U = np.clip(warm, ocp.u_min, ocp.u_max)
    else:
        U = np.clip(np.zeros(N), ocp.u_min, ocp.u_max)

    mu_pen = s.merit_penalty_init
    qp_ws: tuple[int, ...] = tuple(warm_working_set)
    verdict = MAX_ITERATIONS
    restoration_rounds = 0
    it = 0
    mu = np.zeros(ocp.n_ineq)
    nu_lo = np.zeros(N)
    nu_hi = np.zeros(N)
    kkt = math.inf

    while it < s.max_iter:
        it += 1
        traj, h_seq, J, gJ, H, S = ocp.rollout_full(U)
        c = ocp.constraint_values(h_seq)
        Jc = ocp.constraint_jacobian(traj, S)
        viol_sum, viol_max = _violation(c)

        lo = ocp.u_min - U
        hi = ocp.u_max - U
        # mild positive values are clamped into the plain subproblem; real
        # violations go through the elastic form
        elastic = viol_max > 1e-7
        d, slack, mu, nu_lo, nu_hi, qp_ws = _solve_subproblem(
            H, gJ, c, Jc, lo, hi, s, elastic, qp_ws)

        if elastic and slack.max(initial=0.0) > s.tol_feas:
            # linearized problem infeasible: restoration decides
            restoration_rounds += 1
            U, theta = _restore_feasibility(ocp, U, s)
            if theta > s.tol_feas:
                verdict = INFEASIBLE
                break
            if restoration_rounds >= 3:
                break
            continue

        kkt = _kkt_residual(gJ, Jc, mu, nu_lo, nu_hi)
        comp_tol = s.tol_opt * (1.0 + float(mu.max(initial=0.0)))
        comp = float(np.abs(mu * c).max(initial=0.0))
        if viol_max <= s.tol_feas and kkt <= s.tol_opt and comp <= comp_tol:
            verdict = OPTIMAL
            break

        mu_pen = max(mu_pen, 1.5 * float(mu.max(initial=0.0)) + 1e-4)
        phi0 = J + mu_pen * viol_sum
        descent = float(gJ @ d) - mu_pen * viol_sum
        if np.abs(d).max(initial=0.0) <= 1e-14:
            break  # stalled; verdict stays MaxIterations unless KKT held above
        alpha = 1.0
        accepted = False
        noise = 1e-12 * (1.0 + abs(phi0))  # float-noise allowance near optima
        for _ in range(s.ls_max_steps):
            U_try = U + alpha * d
            try:
                _, h_try, J_try = ocp.rollout_values(U_try)
            except RolloutDiverged:
                alpha *= s.ls_backtrack
                continue
            v_try, _ = _violation(ocp.constraint_values(h_try))
            if J_try + mu_pen * v_try <= \
                    phi0 + s.ls_armijo * alpha * min(descent, 0.0) + noise:
                accepted = True
                break
            alpha *= s.ls_backtrack
        if not accepted:
            break  # no merit progress possible at this point
        U = U_try

    traj, h_seq, J, gJ, _, S = ocp.rollout_full(U)
    c = ocp.constraint_values(h_seq)
    _, viol_max = _violation(c)
    if verdict == OPTIMAL and viol_max > s.tol_feas:
        verdict = MAX_ITERATIONS  # defensive; Optimal must be feasible
    active = tuple(int(j) for j in range(len(c)) if c[j] >= -10.0 * s.tol_feas)
    return OCPResult(
        verdict=verdict, u=U, trajectory=traj, objective=J,
        max_violation=viol_max, kkt_residual=kkt, iterations=it,
        solve_time=time.perf_counter() - t0, multipliers=mu,
        bound_mult_lower=nu_lo, bound_mult_upper=nu_hi,
        active_set=active, qp_working_set=qp_ws)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

_BF_MAX_N = 4
_BF_MAX_POINTS = 31


def brute_force_solve(ocp: FiniteHorizonOCP, grid_points_per_step: int,
                      feas_tol: Optional[float] = None,
                      settings: Optional[SolverSettings] = None) -> OCPResult:
    """Exhaustive search over a uniform control grid (desk-scale oracle).

    Refuses horizons beyond N=4 or grids beyond 31 points per step. The
    feasibility tolerance defaults to the grid's own constraint resolution
    (half the largest constraint change between adjacent grid points, floored
    at the solver feasibility tolerance); strictly feasible points are
    preferred when choosing the reported minimizer.
    """
    t0 = time.perf_counter()
    s = settings if settings is not None else SolverSettings()
    k = int(grid_points_per_step)
    N = ocp.N
    if N > _BF_MAX_N or k > _BF_MAX_POINTS:
        raise ValueError(
            f"brute-force budget exceeded (N={N} > {_BF_MAX_N} or "
            f"{k} > {_BF_MAX_POINTS} grid points)")
    if k < 2:
        raise ValueError("need at least 2 grid points per step")
    grid = np.linspace(ocp.u_min, ocp.u_max, k)
    mesh = np.meshgrid(*([grid] * N), indexing="ij")
    combos = np.stack([m_.ravel() for m_ in mesh], axis=1)  # (k^N, N)
    B = combos.shape[0]

    h_all = np.empty((B, N + 1))
    costs = np.zeros(B)
    X = np.tile(ocp.x0, (B, 1))
    wx = np.array(ocp.cost.state_weights)
    wu = ocp.cost.control_weight
    if ocp.plant == "acc":
        p = ocp.params
        cp = ocp.cparams
        vp = ocp.vp_schedule
        q = ocp.q_hat

        def h_batch(X, i):
            return ((p.r * (vp[i] - X[:, 1] - p.v_fmean) + p.tau_h - cp.ttc)
                    * X[:, 1] - X[:, 0] - p.tau_h * vp[i] + cp.ds0 - p.d0)

        h_all[:, 0] = h_batch(X, 0)
        for i in range(N):
            u_i = combos[:, i]
            costs += (X ** 2) @ wx + wu * u_i ** 2
            vf = vp[i] - X[:, 1]
            a13 = -p.tau_h * p.T - p.r * p.T * (2.0 * vf - p.v_fmean)
            X = np.column_stack([
                X[:, 0] + p.T * X[:, 1] + a13 * X[:, 2],
                X[:, 1] - p.T * X[:, 2] + p.T * q,
                (1.0 - p.T / p.Tg) * X[:, 2] + (p.Kg * p.T / p.Tg) * u_i,
            ])
            h_all[:, i + 1] = h_batch(X, i + 1)
    else:
        T = ocp.T
        h_all[:, 0] = -X[:, 0]
        for i in range(N):
            u_i = combos[:, i]
            costs += (X ** 2) @ wx + wu * u_i ** 2
            X = np.column_stack([X[:, 0] - T * X[:, 1], X[:, 1] + T * u_i])
            h_all[:, i + 1] = -X[:, 0]

    c_all = h_all @ ocp.weightmat.T            # (B, n_ineq)
    viol = np.maximum(c_all, 0.0).max(axis=1) if ocp.n_ineq else np.zeros(B)

    if feas_tol is None:
        resolution = 0.0
        if ocp.n_ineq:
            c_mesh = c_all.reshape((k,) * N + (ocp.n_ineq,))
            for axis in range(N):
                dc = np.abs(np.diff(c_mesh, axis=axis))
                resolution = max(resolution, 0.5 * float(dc.max()))
        feas_tol = max(s.tol_feas, resolution)

    strict = viol <= s.tol_feas
    loose = viol <= feas_tol
    if strict.any():
        pool = np.flatnonzero(strict)
    elif loose.any():
        pool = np.flatnonzero(loose)
    else:
        pool = None

    if pool is None:
        best = int(np.argmin(viol))
        verdict = INFEASIBLE
    else:
        best = int(pool[np.argmin(costs[pool])])
        verdict = OPTIMAL
    u_best = combos[best]
    traj, h_seq, J = ocp.rollout_values(u_best)
    c_best = ocp.constraint_values(h_seq)
    _, viol_best = _violation(c_best)
    active = tuple(int(j) for j in range(len(c_best))
                   if c_best[j] >= -10.0 * s.tol_feas)
    return OCPResult(
        verdict=verdict, u=u_best, trajectory=traj, objective=J,
        max_violation=viol_best, kkt_residual=float("nan"), iterations=B,
        solve_time=time.perf_counter() - t0,
        multipliers=np.zeros(ocp.n_ineq), bound_mult_lower=np.zeros(N),
        bound_mult_upper=np.zeros(N), active_set=active)

"""Dense primal active-set solver for strictly convex quadratic programs.

Solves  min_z 0.5*z'Pz + q'z  s.t.  Gz <= h  from a feasible starting point.
Sized for receding-horizon subproblems (tens of variables, a few hundred
rows); every working-set change re-solves a dense KKT system, which is cheap
at this scale and keeps the iteration logic transparent.

Ties are broken by lowest constraint index both when adding a blocking row
and when dropping a row with negative multiplier, so solves are bit
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = ["QPResult", "solve_qp"]

_KKT_SHIFT = 1e-12  # dual-block stabilization against near-dependent rows


@dataclass
class QPResult:
    z: np.ndarray
    multipliers: np.ndarray   # one per row of G, >= 0 at the solution
    status: str               # "optimal" or "max_iter"
    iterations: int
    working_set: tuple[int, ...]


def _eqp_step(P, q, G, h, z, work, refine=False):
    """Newton step onto the working-set face, with its multipliers."""
    k = len(work)
    n = len(q)
    if k == 0:
        p = np.linalg.solve(P, -(P @ z + q))
        return p, np.empty(0)
    Gw = G[work]
    kkt = np.empty((n + k, n + k))
    kkt[:n, :n] = P
    kkt[:n, n:] = Gw.T
    kkt[n:, :n] = Gw
    kkt[n:, n:] = -_KKT_SHIFT * np.eye(k)
    rhs = np.concatenate([-(P @ z + q), h[work] - Gw @ z])
    try:
        sol = np.linalg.solve(kkt, rhs)
        if refine:  # one refinement pass where precision matters
            sol += np.linalg.solve(kkt, rhs - kkt @ sol)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:n], sol[n:]


def solve_qp(P: np.ndarray, q: np.ndarray, G: np.ndarray, h: np.ndarray,
             z0: np.ndarray, working_set: Iterable[int] = (),
             max_iter: int | None = None, tol: float = 1e-10) -> QPResult:
    """Minimize 0.5*z'Pz + q'z subject to Gz <= h, starting at feasible z0.

    `working_set` seeds the active set (any subset of row indices); rows
    need not be exactly active at z0. Raises ValueError if z0 violates the
    constraints by more than a small slack.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    z = np.asarray(z0, dtype=float).copy()
    n = len(q)
    m = len(h)
    if m and (G @ z - h).max() > 1e-7:
        raise ValueError("QP starting point infeasible")
    if max_iter is None:
        max_iter = 50 + 5 * (n + m)

    work = sorted(set(int(i) for i in working_set))[:n]
    in_work = np.zeros(m, dtype=bool)
    in_work[work] = True

    mu_full = np.zeros(m)
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        p, mu_w = _eqp_step(P, q, G, h, z, work)
        if work and np.abs(p).max() <= 1e-5 * (1.0 + np.abs(z).max()):
            # near the face the residual matters; re-solve refined
            p, mu_w = _eqp_step(P, q, G, h, z, work, refine=True)
        if np.abs(p).max() <= tol * (1.0 + np.abs(z).max()):
            if len(work) == 0 or mu_w.min() >= -tol:
                mu_full[:] = 0.0
                if work:  # refined solve for the reported multipliers
                    _, mu_w = _eqp_step(P, q, G, h, z, work, refine=True)
                    mu_full[work] = np.maximum(mu_w, 0.0)
                status = "optimal"
                break
            # drop the most negative multiplier; ties -> lowest row index
            drop_pos = int(np.argmin(mu_w))
            removed = work[drop_pos]
            work.remove(removed)
            in_work[removed] = False
            continue
        # longest feasible step along p, blocking tie -> lowest row index
        alpha = 1.0
        blocking = -1
        if m:
            Gp = G @ p
            cand = (~in_work) & (Gp > 1e-12)
            if cand.any():
                slack = np.maximum(h[cand] - G[cand] @ z, 0.0)
                ratios = slack / Gp[cand]
                pos = int(np.argmin(ratios))
                if ratios[pos] < alpha - 1e-14:
                    alpha = float(ratios[pos])
                    blocking = int(np.flatnonzero(cand)[pos])
        z += alpha * p
        if blocking >= 0:
            work.append(blocking)
            work.sort()
            in_work[blocking] = True
    else:
        it = max_iter

    if status != "optimal":
        mu_full[:] = 0.0
        if work:
            _, mu_w = _eqp_step(P, q, G, h, z, work, refine=True)
            mu_full[work] = np.maximum(mu_w, 0.0)
    return QPResult(z=z, multipliers=mu_full, status=status,
                    iterations=it, working_set=tuple(work))

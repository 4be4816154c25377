"""Primal active-set method for dense strictly convex QPs.

    minimize    g @ x + 0.5 * x @ H @ x
    subject to  A @ x <= b          (one-sided rows only)

H must be symmetric positive definite on the whole space.  The iteration
starts from a feasible point, solves an equality-constrained subproblem on
the current working set, and either moves to a blocking constraint or drops
the working constraint with the most negative multiplier (ties resolved by
lowest row index, additions by lowest blocking row index, so the solve is
deterministic).  Each working-set change counts as one iteration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_ACTIVITY_TOL = 1e-9
_MULT_TOL = 1e-10
_STEP_TOL = 1e-11


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    multipliers: np.ndarray   # one per row, >= 0, zero off the working set
    status: QpStatus
    iterations: int


def _kkt_step(H, A_w, rhs_top):
    """Solve [H A_w.T; A_w 0] [q; lam] = [rhs_top; 0]."""
    n = H.shape[0]
    k = A_w.shape[0]
    if k == 0:
        return np.linalg.solve(H, rhs_top), np.zeros(0)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = A_w.T
    K[n:, :n] = A_w
    rhs = np.concatenate([rhs_top, np.zeros(k)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:n], sol[n:]


def _polish(H, g, A, b, x, working, lam_w):
    """Re-solve the terminal working-set system in absolute form.

    The main loop accumulates x through damped steps; solving
    [H A_w.T; A_w 0] [x; lam] = [-g; b_w] once at the end (plus one
    iterative-refinement pass) removes the accumulated drift.  The polished
    point is kept only if it is feasible for the rows outside the set.
    """
    n = len(g)
    k = len(working)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    if k:
        A_w = A[working]
        K[:n, n:] = A_w.T
        K[n:, :n] = A_w
    rhs = np.concatenate([-g, b[working] if k else np.zeros(0)])
    try:
        sol = np.linalg.solve(K, rhs)
        sol += np.linalg.solve(K, rhs - K @ sol)
    except np.linalg.LinAlgError:
        return x, lam_w
    x_new, lam_new = sol[:n], sol[n:]
    if not np.all(np.isfinite(x_new)):
        return x, lam_w
    viol = float(np.max(A @ x_new - b, initial=0.0)) if len(b) else 0.0
    if viol > 1e-9 * (1.0 + float(np.max(np.abs(b), initial=0.0))):
        return x, lam_w
    return x_new, lam_new


def solve_qp(H, g, A, b, x0, max_iter: int, feas_tol: float = 1e-7) -> QpSolution:
    """Minimize the quadratic from the feasible point x0.

    x0 may violate constraints by at most feas_tol (subproblem data is
    produced by an LP solved to tighter tolerance); genuine violations
    report status INFEASIBLE.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(g)
    m = len(b)
    x = np.asarray(x0, dtype=float).copy()

    if m and float(np.max(A @ x - b)) > feas_tol:
        return QpSolution(x, np.nan, np.zeros(m), QpStatus.INFEASIBLE, 0)

    working: list[int] = []
    iterations = 0  # counts working-set changes
    passes = 0
    lam_w = np.zeros(0)
    while iterations <= max_iter and passes <= 3 * max_iter + 10:
        passes += 1
        A_w = A[working] if working else np.zeros((0, n))
        q, lam_w = _kkt_step(H, A_w, -(g + H @ x))
        if not np.all(np.isfinite(q)):
            return QpSolution(x, np.nan, np.zeros(m), QpStatus.NUMERICAL_FAILURE, iterations)

        if float(np.max(np.abs(q), initial=0.0)) <= _STEP_TOL * (1.0 + float(np.max(np.abs(x), initial=0.0))):
            if len(lam_w) == 0 or float(np.min(lam_w)) >= -_MULT_TOL:
                x, lam_w = _polish(H, g, A, b, x, working, lam_w)
                mult = np.zeros(m)
                for idx, row in enumerate(working):
                    mult[row] = max(lam_w[idx], 0.0)
                return QpSolution(x, float(g @ x + 0.5 * x @ H @ x), mult,
                                  QpStatus.OPTIMAL, iterations)
            worst = int(np.argmin(lam_w))
            # np.argmin returns the first minimum; the working list is kept
            # in insertion order, so break ties by the smaller row index.
            worst_val = lam_w[worst]
            for idx in range(len(working)):
                if lam_w[idx] <= worst_val + 1e-15 and working[idx] < working[worst]:
                    worst = idx
            working.pop(worst)
            iterations += 1
            continue

        # Ratio test against rows outside the working set.
        alpha = 1.0
        blocker = -1
        if m:
            s = A @ q
            resid = b - A @ x
            for i in range(m):
                if i in working or s[i] <= _ACTIVITY_TOL * (1.0 + abs(b[i])):
                    continue
                ratio = max(resid[i], 0.0) / s[i]
                if ratio < alpha - 1e-14:
                    alpha = ratio
                    blocker = i
        x = x + alpha * q
        if blocker >= 0:
            working.append(blocker)
            iterations += 1
        # alpha == 1 with no blocker: q reached the subproblem minimum and
        # the next pass will evaluate multipliers with q ~ 0.
    return QpSolution(x, float(g @ x + 0.5 * x @ H @ x), np.zeros(m),
                      QpStatus.MAX_ITERATIONS, iterations)

"""Dense primal simplex for linear programs with bounded variables.

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lower <= x <= upper   (entries may be +-inf)

The method is the textbook bounded-variable simplex: nonbasic variables sit
at one of their finite bounds, the basis is refactorized densely at every
pivot (instances here have at most a few dozen rows), and entering/leaving
choices follow Bland's rule so the iteration cannot cycle.  Feasibility is
established by a phase-1 problem with one signed artificial per row unless
the caller supplies a starting basis that is already feasible.

The solver is deterministic: identical inputs produce identical pivots and
identical solutions on every run.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_PIVOT_TOL = 1e-10
_DUAL_TOL = 1e-9
_FEAS_TOL = 1e-8

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: LpStatus
    iterations: int


def _pick_initial_value(lo: float, up: float) -> tuple[float, int]:
    if np.isfinite(lo):
        return lo, AT_LOWER
    if np.isfinite(up):
        return up, AT_UPPER
    return 0.0, AT_LOWER  # free variable; simplex may move it either way


class _Tableau:
    """Mutable solver state over the standard-form data."""

    def __init__(self, A, b, lower, upper, basis, values, state):
        self.A = A
        self.b = b
        self.lower = lower
        self.upper = upper
        self.basis = basis          # row -> variable index
        self.values = values        # current value per variable
        self.state = state          # AT_LOWER / AT_UPPER / BASIC per variable
        self.iterations = 0

    def refresh_basics(self) -> bool:
        m = len(self.basis)
        B = self.A[:, self.basis]
        nonbasic = np.flatnonzero(self.state != BASIC)
        rhs = self.b - self.A[:, nonbasic] @ self.values[nonbasic]
        try:
            xb = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            return False
        self.values[self.basis] = xb
        return True

    def run(self, c: np.ndarray, max_iter: int) -> LpStatus:
        free_mask = ~np.isfinite(self.lower) & ~np.isfinite(self.upper)
        while True:
            if self.iterations >= max_iter:
                return LpStatus.MAX_ITERATIONS
            B = self.A[:, self.basis]
            try:
                y = np.linalg.solve(B.T, c[self.basis])
            except np.linalg.LinAlgError:
                return LpStatus.NUMERICAL_FAILURE
            reduced = c - self.A.T @ y
            scale = 1.0 + float(np.max(np.abs(c), initial=0.0))
            tol = _DUAL_TOL * scale

            entering = -1
            direction = 0.0
            for j in range(len(c)):
                st = self.state[j]
                if st == BASIC or self.lower[j] == self.upper[j]:
                    continue
                d = reduced[j]
                if (st == AT_LOWER and d < -tol) or (free_mask[j] and d < -tol):
                    entering, direction = j, 1.0
                    break
                if (st == AT_UPPER and d > tol) or (free_mask[j] and d > tol):
                    entering, direction = j, -1.0
                    break
            if entering < 0:
                return LpStatus.OPTIMAL

            try:
                w = np.linalg.solve(B, self.A[:, entering])
            except np.linalg.LinAlgError:
                return LpStatus.NUMERICAL_FAILURE

            # Ratio test: how far the entering variable can move.
            step = np.inf
            leaving_row = -1
            hit = AT_LOWER
            for i, var in enumerate(self.basis):
                coef = direction * w[i]
                if coef > _PIVOT_TOL:
                    lim = (self.values[var] - self.lower[var]) / coef
                    if np.isfinite(lim) and lim < step - 1e-12:
                        step, leaving_row, hit = lim, i, AT_LOWER
                    elif np.isfinite(lim) and abs(lim - step) <= 1e-12 and (
                            leaving_row < 0 or var < self.basis[leaving_row]):
                        leaving_row, hit = i, AT_LOWER
                elif coef < -_PIVOT_TOL:
                    lim = (self.upper[var] - self.values[var]) / (-coef)
                    if np.isfinite(lim) and lim < step - 1e-12:
                        step, leaving_row, hit = lim, i, AT_UPPER
                    elif np.isfinite(lim) and abs(lim - step) <= 1e-12 and (
                            leaving_row < 0 or var < self.basis[leaving_row]):
                        leaving_row, hit = i, AT_UPPER
            bound_gap = self.upper[entering] - self.lower[entering]
            flip = np.isfinite(bound_gap) and bound_gap <= step + 1e-12

            if leaving_row < 0 and not flip:
                return LpStatus.UNBOUNDED

            self.iterations += 1
            if flip and (leaving_row < 0 or bound_gap <= step):
                delta = direction * bound_gap
                self.values[self.basis] -= delta * w
                self.values[entering] += delta
                self.state[entering] = AT_UPPER if self.state[entering] == AT_LOWER else AT_LOWER
                continue

            step = max(step, 0.0)
            delta = direction * step
            self.values[self.basis] -= delta * w
            self.values[entering] += delta
            out = self.basis[leaving_row]
            self.values[out] = self.lower[out] if hit == AT_LOWER else self.upper[out]
            self.state[out] = hit
            self.state[entering] = BASIC
            self.basis[leaving_row] = entering


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None,
             lower=None, upper=None, max_iter: int | None = None,
             start_basis: np.ndarray | None = None,
             start_values: np.ndarray | None = None,
             start_state: np.ndarray | None = None) -> LpSolution:
    """Solve the bounded-variable LP; see the module docstring for the form.

    A warm start may be supplied as (start_basis, start_values, start_state)
    over the extended variable vector (structural variables then one slack
    per inequality row); it must describe a primal-feasible basis, otherwise
    the solver falls back to phase 1.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float).reshape(n).copy()
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).reshape(n).copy()

    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq
    if m == 0:
        # Pure box problem: optimum at bounds, closed form (0 if cost-free).
        neutral = np.clip(np.zeros(n), lower, upper)
        x = np.where(c > 0, lower, np.where(c < 0, upper, neutral))
        x = np.where(np.isfinite(x), x, 0.0)
        if np.any((c > 0) & ~np.isfinite(lower)) or np.any((c < 0) & ~np.isfinite(upper)):
            return LpSolution(x[:n], -np.inf, LpStatus.UNBOUNDED, 0)
        return LpSolution(x[:n], float(c @ x), LpStatus.OPTIMAL, 0)

    N = n + m_ub
    A = np.zeros((m, N))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    lo = np.concatenate([lower, np.zeros(m_ub)])
    up = np.concatenate([upper, np.full(m_ub, np.inf)])
    cost = np.concatenate([c, np.zeros(m_ub)])
    if max_iter is None:
        max_iter = 200 + 40 * (N + m)

    tab = None
    if start_basis is not None:
        basis = np.asarray(start_basis, dtype=int).copy()
        values = np.asarray(start_values, dtype=float).copy()
        state = np.asarray(start_state, dtype=int).copy()
        cand = _Tableau(A, b, lo, up, basis, values, state)
        if cand.refresh_basics():
            xb = cand.values[cand.basis]
            ok = np.all(xb >= lo[cand.basis] - _FEAS_TOL) and np.all(xb <= up[cand.basis] + _FEAS_TOL)
            if ok:
                tab = cand

    phase1_iters = 0
    if tab is None:
        values = np.empty(N)
        state = np.empty(N, dtype=int)
        for j in range(N):
            values[j], state[j] = _pick_initial_value(lo[j], up[j])
        resid = b - A @ values
        signs = np.where(resid >= 0, 1.0, -1.0)
        A1 = np.hstack([A, np.diag(signs)])
        lo1 = np.concatenate([lo, np.zeros(m)])
        up1 = np.concatenate([up, np.full(m, np.inf)])
        values1 = np.concatenate([values, np.abs(resid)])
        state1 = np.concatenate([state, np.full(m, BASIC, dtype=int)])
        basis1 = np.arange(N, N + m)
        cost1 = np.concatenate([np.zeros(N), np.ones(m)])
        tab1 = _Tableau(A1, b, lo1, up1, basis1, values1, state1)
        status = tab1.run(cost1, max_iter)
        phase1_iters = tab1.iterations
        if status not in (LpStatus.OPTIMAL, LpStatus.MAX_ITERATIONS):
            return LpSolution(values1[:n], np.nan, status, phase1_iters)
        infeas = float(cost1 @ tab1.values)
        if infeas > _FEAS_TOL * (1.0 + float(np.max(np.abs(b), initial=0.0))):
            st = LpStatus.INFEASIBLE if status == LpStatus.OPTIMAL else LpStatus.MAX_ITERATIONS
            return LpSolution(values1[:n], np.nan, st, phase1_iters)
        # Phase 2 keeps artificial columns but pins them at zero.
        lo1[N:] = 0.0
        up1[N:] = 0.0
        tab1.values[N:] = np.where(np.abs(tab1.values[N:]) < 1e-12, 0.0, tab1.values[N:])
        tab = _Tableau(A1, b, lo1, up1, tab1.basis, tab1.values, tab1.state)
        cost = np.concatenate([cost, np.zeros(m)])
    else:
        if not tab.refresh_basics():
            return LpSolution(tab.values[:n], np.nan, LpStatus.NUMERICAL_FAILURE, 0)

    status = tab.run(cost, max_iter)
    tab.refresh_basics()
    x = tab.values[:n]
    total_iters = phase1_iters + tab.iterations
    if status == LpStatus.OPTIMAL:
        # Validate the primal solution before reporting optimality.
        viol = 0.0
        if m_ub:
            viol = max(viol, float(np.max(A_ub @ x - b_ub, initial=0.0)))
        if m_eq:
            viol = max(viol, float(np.max(np.abs(A_eq @ x - b_eq), initial=0.0)))
        viol = max(viol, float(np.max(lower - x, initial=0.0)), float(np.max(x - upper, initial=0.0)))
        if not np.isfinite(viol) or viol > _FEAS_TOL * (1.0 + float(np.max(np.abs(b), initial=0.0))):
            status = LpStatus.NUMERICAL_FAILURE
    return LpSolution(x.copy(), float(c @ x), status, total_iters)

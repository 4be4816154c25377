"""Subproblems of the robust SQP iteration.

Three solve paths share the linearized constraint data (h, c and their
Jacobians at the current iterate):

* the feasibility-restoration LP, which finds the best achievable l-inf
  residual y of the linearized constraints inside a box |p| <= sigma_k; its
  optimum kappa is used to relax the direction subproblem so that it is
  always consistent;
* a regularized QP fallback for the rare case the simplex path stalls;
* the box-trust direction QP with the relaxed rows, which produces the
  search direction together with multipliers for both one-sided halves of
  every equality row;
* a small box LP over the linearized feasible cone whose negated optimum is
  the first-order optimality measure chi.

Brute-force oracles (vertex enumeration for the LPs, active-set enumeration
for the QP) are provided for testing; they share the exact row layout of
the fast paths.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .problems import infeasibility
from .qp import QpStatus, solve_qp
from .simplex import AT_LOWER, BASIC, LpStatus, solve_lp


class InstanceTooLargeError(ValueError):
    """Brute-force enumeration refused: instance above the size cap."""


class SubproblemStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


_FROM_LP = {
    LpStatus.OPTIMAL: SubproblemStatus.OPTIMAL,
    LpStatus.INFEASIBLE: SubproblemStatus.INFEASIBLE,
    LpStatus.UNBOUNDED: SubproblemStatus.UNBOUNDED,
    LpStatus.MAX_ITERATIONS: SubproblemStatus.MAX_ITERATIONS,
    LpStatus.NUMERICAL_FAILURE: SubproblemStatus.NUMERICAL_FAILURE,
}

_FROM_QP = {
    QpStatus.OPTIMAL: SubproblemStatus.OPTIMAL,
    QpStatus.INFEASIBLE: SubproblemStatus.INFEASIBLE,
    QpStatus.MAX_ITERATIONS: SubproblemStatus.MAX_ITERATIONS,
    QpStatus.NUMERICAL_FAILURE: SubproblemStatus.NUMERICAL_FAILURE,
}


@dataclass(frozen=True)
class QpMultipliers:
    lam_plus: np.ndarray    # upper halves of equality rows
    mu_plus: np.ndarray     # lower halves of equality rows
    nu_plus: np.ndarray     # inequality rows
    bounds: np.ndarray      # trust-box rows, upper then lower (2n)


@dataclass
class SubproblemSolution:
    primal: np.ndarray
    objective_value: float
    status: SubproblemStatus
    iterations: int
    multipliers: QpMultipliers | None = None


@dataclass(frozen=True)
class DistanceLpData:
    """Linearized constraint data for the restoration LP at one iterate."""

    h: np.ndarray
    c: np.ndarray
    grad_h: np.ndarray      # (n, m1)
    grad_c: np.ndarray      # (n, m2)
    sigma_k: float

    def __post_init__(self):
        object.__setattr__(self, "h", np.atleast_1d(np.asarray(self.h, dtype=float)))
        object.__setattr__(self, "c", np.atleast_1d(np.asarray(self.c, dtype=float)))
        n = self.dim
        object.__setattr__(self, "grad_h", np.asarray(self.grad_h, dtype=float).reshape(n, len(self.h)))
        object.__setattr__(self, "grad_c", np.asarray(self.grad_c, dtype=float).reshape(n, len(self.c)))
        if self.sigma_k < 0:
            raise ValueError("sigma_k must be nonnegative")

    @property
    def dim(self) -> int:
        gh = np.asarray(self.grad_h)
        gc = np.asarray(self.grad_c)
        return gh.shape[0] if gh.ndim == 2 else gc.shape[0]

    @property
    def phi(self) -> float:
        return infeasibility(self.h, self.c)


@dataclass(frozen=True)
class DirectionQpData:
    """Data of the relaxed direction subproblem."""

    g: np.ndarray
    H: np.ndarray
    h: np.ndarray
    c: np.ndarray
    grad_h: np.ndarray
    grad_c: np.ndarray
    kappa_k: float
    beta_k: float
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))
        n = len(self.g)
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float).reshape(n, n))
        object.__setattr__(self, "h", np.atleast_1d(np.asarray(self.h, dtype=float)))
        object.__setattr__(self, "c", np.atleast_1d(np.asarray(self.c, dtype=float)))
        object.__setattr__(self, "grad_h", np.asarray(self.grad_h, dtype=float).reshape(n, len(self.h)))
        object.__setattr__(self, "grad_c", np.asarray(self.grad_c, dtype=float).reshape(n, len(self.c)))
        if self.kappa_k < -1e-12:
            raise ValueError("kappa_k must be nonnegative")
        if self.beta_k <= 0:
            raise ValueError("beta_k must be positive")

    @property
    def dim(self) -> int:
        return len(self.g)


def _restoration_rows(data: DistanceLpData):
    """Rows a@(p, y) <= b of the restoration feasible set (y column last)."""
    n = data.dim
    m1, m2 = len(data.h), len(data.c)
    m = 2 * m1 + m2
    A = np.zeros((m, n + 1))
    b = np.zeros(m)
    A[:m1, :n] = data.grad_h.T
    b[:m1] = -data.h
    A[m1:2 * m1, :n] = -data.grad_h.T
    b[m1:2 * m1] = data.h
    A[2 * m1:, :n] = data.grad_c.T
    b[2 * m1:] = -data.c
    A[:, n] = -1.0
    return A, b


def _direction_rows(data: DirectionQpData):
    """Rows a@d <= b of the relaxed direction subproblem, box included.

    Layout: equality upper halves (m1), equality lower halves (m1),
    inequalities (m2), box upper (n), box lower (n).
    """
    n = data.dim
    m1, m2 = len(data.h), len(data.c)
    A = np.zeros((2 * m1 + m2 + 2 * n, n))
    b = np.zeros(2 * m1 + m2 + 2 * n)
    A[:m1] = data.grad_h.T
    b[:m1] = data.kappa_k - data.h
    A[m1:2 * m1] = -data.grad_h.T
    b[m1:2 * m1] = data.kappa_k + data.h
    A[2 * m1:2 * m1 + m2] = data.grad_c.T
    b[2 * m1:2 * m1 + m2] = data.kappa_k - data.c
    A[2 * m1 + m2:2 * m1 + m2 + n] = np.eye(n)
    b[2 * m1 + m2:2 * m1 + m2 + n] = data.beta_k
    A[2 * m1 + m2 + n:] = -np.eye(n)
    b[2 * m1 + m2 + n:] = data.beta_k
    return A, b


def solve_distance_lp(data: DistanceLpData, canonical: bool = True) -> SubproblemSolution:
    """Best l-inf residual of the linearized constraints within the box.

    Returns primal (p, y) with y the minimal residual; always y <= phi since
    p = 0 attains the current residual.  With canonical=True the returned p
    is additionally polished to the minimum-l1 point of the optimal face, so
    ties resolve to p = 0 whenever the zero step is optimal.
    """
    n = data.dim
    m1, m2 = len(data.h), len(data.c)
    phi = data.phi
    if data.sigma_k == 0.0 or m1 + m2 == 0:
        return SubproblemSolution(np.concatenate([np.zeros(n), [phi]]), phi,
                                  SubproblemStatus.OPTIMAL, 0)

    A, b = _restoration_rows(data)
    m = len(b)
    c_obj = np.zeros(n + 1)
    c_obj[n] = 1.0
    lower = np.concatenate([np.full(n, -data.sigma_k), [0.0]])
    upper = np.concatenate([np.full(n, data.sigma_k), [np.inf]])

    # Crafted feasible basis: p at its lower bounds, y lifted to cover the
    # worst row (basic via that row) or nonbasic at zero if already covered.
    N = (n + 1) + m
    values = np.concatenate([lower[:n], [0.0], np.zeros(m)])
    state = np.full(N, AT_LOWER, dtype=int)
    needed = A[:, :n] @ values[:n] - b
    ymin = float(np.max(needed, initial=0.0))
    basis = np.arange(n + 1, n + 1 + m)  # slack of each row
    if ymin > 0.0:
        worst = int(np.argmax(needed))
        values[n] = ymin
        basis = basis.copy()
        basis[worst] = n  # y becomes basic through the worst row
        state[n] = BASIC
    state[basis] = BASIC
    values[n + 1:] = b + values[n] - A[:, :n] @ values[:n]
    if ymin > 0.0:
        values[n + 1 + worst] = 0.0
        state[n + 1 + worst] = AT_LOWER

    res = solve_lp(c_obj, A_ub=A, b_ub=b, lower=lower, upper=upper,
                   start_basis=basis, start_values=values, start_state=state)
    status = _FROM_LP[res.status]
    if status == SubproblemStatus.MAX_ITERATIONS:
        status = SubproblemStatus.NUMERICAL_FAILURE  # pivoting stalled
    if status != SubproblemStatus.OPTIMAL:
        return SubproblemSolution(res.x, np.nan, status, res.iterations)

    y_opt = min(res.x[n], phi)  # p = 0 attains phi, so phi bounds the optimum
    p_opt = res.x[:n]
    iterations = res.iterations
    if canonical:
        polished = _l1_polish(data, A, b, y_opt)
        if polished is not None:
            p_opt, extra = polished
            iterations += extra
    z = np.concatenate([p_opt, [y_opt]])
    return SubproblemSolution(z, float(y_opt), SubproblemStatus.OPTIMAL, iterations)


def _l1_polish(data: DistanceLpData, A, b, y_opt: float):
    """Minimum-l1 p on the optimal face {rows <= y_opt, |p| <= sigma}."""
    n = data.dim
    m = len(b)
    slack = 1e-10 * (1.0 + abs(y_opt))
    # Split p = pp - pm with pp, pm >= 0.
    Ap = A[:, :n]
    A2 = np.hstack([Ap, -Ap])
    b2 = b + y_opt + slack
    c2 = np.ones(2 * n)
    bounds_hi = np.full(2 * n, data.sigma_k)
    res = solve_lp(c2, A_ub=A2, b_ub=b2, lower=np.zeros(2 * n), upper=bounds_hi)
    if res.status != LpStatus.OPTIMAL:
        return None
    p = res.x[:n] - res.x[n:]
    return p, res.iterations


def solve_regularized_distance_qp(data: DistanceLpData, zeta_r: float = 1e-8) -> SubproblemSolution:
    """Regularized restoration fallback: min y + zeta_r/2 (|p|^2 + y^2).

    Shares the restoration feasible set; the returned y plays the role of
    kappa.  Failure here is fatal for the iteration (reported upstream).
    """
    if zeta_r <= 0:
        raise ValueError("zeta_r must be positive")
    n = data.dim
    m1, m2 = len(data.h), len(data.c)
    phi = data.phi
    if data.sigma_k == 0.0 or m1 + m2 == 0:
        return SubproblemSolution(np.concatenate([np.zeros(n), [phi]]), phi,
                                  SubproblemStatus.OPTIMAL, 0)
    A, b = _restoration_rows(data)
    # Append box rows for p and the sign row for y.
    box = np.zeros((2 * n + 1, n + 1))
    box[:n, :n] = np.eye(n)
    box[n:2 * n, :n] = -np.eye(n)
    box[2 * n, n] = -1.0
    b_box = np.concatenate([np.full(2 * n, data.sigma_k), [0.0]])
    A_all = np.vstack([A, box])
    b_all = np.concatenate([b, b_box])
    H = zeta_r * np.eye(n + 1)
    g = np.zeros(n + 1)
    g[n] = 1.0
    z0 = np.concatenate([np.zeros(n), [phi]])
    sol = solve_qp(H, g, A_all, b_all, z0, max_iter=50 * (n + 1 + len(b_all)))
    status = _FROM_QP[sol.status]
    if status != SubproblemStatus.OPTIMAL:
        return SubproblemSolution(sol.x, np.nan, SubproblemStatus.NUMERICAL_FAILURE, sol.iterations)
    y = float(max(sol.x[n], 0.0))
    return SubproblemSolution(np.concatenate([sol.x[:n], [y]]), y,
                              SubproblemStatus.OPTIMAL, sol.iterations)


def restoration_step(data: DistanceLpData, zeta_r: float = 1e-8,
                     canonical: bool = True) -> SubproblemSolution:
    """Restoration solve with the prescribed fallback chain.

    Tries the simplex path once and, if the pivoting stalls or fails
    validation, retries with the regularized QP.
    """
    sol = solve_distance_lp(data, canonical=canonical)
    if sol.status == SubproblemStatus.OPTIMAL:
        return sol
    return solve_regularized_distance_qp(data, zeta_r=zeta_r)


def solve_direction_qp(data: DirectionQpData) -> SubproblemSolution:
    """Search direction from the relaxed, box-trusted quadratic subproblem.

    Returns the minimizer of g@d + 0.5 d@H@d over the kappa-relaxed rows
    with multipliers for every row family.  The subproblem is feasible by
    construction whenever kappa_k came from the restoration phase and the
    restoration step fits the trust box.
    """
    n = data.dim
    m1, m2 = len(data.h), len(data.c)
    A, b = _direction_rows(data)

    d0 = data.warm_start
    if d0 is not None:
        d0 = np.asarray(d0, dtype=float)
        if float(np.max(A @ d0 - b, initial=0.0)) > 1e-7:
            d0 = None
    if d0 is None:
        # No usable warm start: restore within the trust box to find one.
        rest = solve_distance_lp(DistanceLpData(data.h, data.c, data.grad_h,
                                                data.grad_c, data.beta_k))
        if rest.status != SubproblemStatus.OPTIMAL:
            return SubproblemSolution(np.zeros(n), np.nan,
                                      SubproblemStatus.NUMERICAL_FAILURE, rest.iterations)
        if rest.objective_value > data.kappa_k + 1e-8:
            return SubproblemSolution(np.zeros(n), np.nan,
                                      SubproblemStatus.INFEASIBLE, rest.iterations)
        d0 = rest.primal[:n]

    sol = solve_qp(data.H, data.g, A, b, d0, max_iter=50 * (n + m1 + m2))
    status = _FROM_QP[sol.status]
    if status != SubproblemStatus.OPTIMAL:
        return SubproblemSolution(sol.x, np.nan, status, sol.iterations,
                                  _split_multipliers(sol.multipliers, m1, m2, n))
    mult = _split_multipliers(sol.multipliers, m1, m2, n)
    # Validate the first-order system before reporting optimality.
    stat = data.g + data.H @ sol.x + A.T @ sol.multipliers
    scale = 1.0 + float(np.max(np.abs(data.g), initial=0.0)) + float(np.max(np.abs(data.H @ sol.x), initial=0.0))
    comp = float(np.max(np.abs(sol.multipliers * (b - A @ sol.x)), initial=0.0))
    if float(np.max(np.abs(stat))) > 1e-8 * scale or comp > 1e-8 * scale:
        status = SubproblemStatus.NUMERICAL_FAILURE
    return SubproblemSolution(sol.x, sol.objective, status, sol.iterations, mult)


def _split_multipliers(mult: np.ndarray, m1: int, m2: int, n: int) -> QpMultipliers:
    return QpMultipliers(
        lam_plus=mult[:m1].copy(),
        mu_plus=mult[m1:2 * m1].copy(),
        nu_plus=mult[2 * m1:2 * m1 + m2].copy(),
        bounds=mult[2 * m1 + m2:].copy(),
    )


@dataclass
class OptimalityLpResult:
    t: np.ndarray
    value: float
    status: SubproblemStatus


def solve_optimality_lp(g, grad_h, grad_c, beta_l: float) -> OptimalityLpResult:
    """Box LP over the linearized feasible cone; chi = -value >= 0.

    Minimizes g@t subject to grad_h.T t = 0, grad_c.T t <= 0 and
    |t|_inf <= beta_l / 2.  The zero vector is always feasible, so the value
    is nonpositive.  Diagnostic only.
    """
    if beta_l <= 0:
        raise ValueError("beta_l must be positive")
    g = np.asarray(g, dtype=float)
    n = len(g)
    grad_h = np.asarray(grad_h, dtype=float).reshape(n, -1)
    grad_c = np.asarray(grad_c, dtype=float).reshape(n, -1)
    half = 0.5 * beta_l
    res = solve_lp(g, A_ub=grad_c.T if grad_c.shape[1] else None,
                   b_ub=np.zeros(grad_c.shape[1]) if grad_c.shape[1] else None,
                   A_eq=grad_h.T if grad_h.shape[1] else None,
                   b_eq=np.zeros(grad_h.shape[1]) if grad_h.shape[1] else None,
                   lower=np.full(n, -half), upper=np.full(n, half))
    status = _FROM_LP[res.status]
    if status != SubproblemStatus.OPTIMAL:
        return OptimalityLpResult(res.x, np.nan, SubproblemStatus.NUMERICAL_FAILURE)
    value = min(res.objective, 0.0)  # t = 0 is feasible
    return OptimalityLpResult(res.x, value, status)


# ---------------------------------------------------------------------------
# Brute-force oracles (testing only)
# ---------------------------------------------------------------------------

_ENUM_CAP = 500_000


def brute_force_qp_oracle(data: DirectionQpData) -> SubproblemSolution:
    """Exact direction-QP optimum by enumerating candidate active sets.

    Every linearly independent subset of rows with size at most n is solved
    as an equality-constrained QP through the Schur complement; feasible
    candidates are compared and ties resolve to the lexicographically
    smallest active set.  Intended for small instances only.
    """
    n = data.dim
    m1, m2 = len(data.h), len(data.c)
    if n + m1 + m2 > 12:
        raise InstanceTooLargeError("oracle limited to n + m1 + m2 <= 12")
    A, b = _direction_rows(data)
    m = len(b)

    Hinv_g = np.linalg.solve(data.H, data.g)
    Hinv_At = np.linalg.solve(data.H, A.T)
    M = A @ Hinv_At

    subsets = [()]
    for k in range(1, n + 1):
        subsets.extend(itertools.combinations(range(m), k))
    subsets.sort()
    if len(subsets) > _ENUM_CAP:
        raise InstanceTooLargeError("active-set enumeration too large")

    best_obj = np.inf
    best_d = None
    best_set: tuple[int, ...] | None = None
    best_lam = None
    for S in subsets:
        if S:
            idx = np.array(S)
            Ms = M[np.ix_(idx, idx)]
            rhs = -(b[idx] + A[idx] @ Hinv_g)
            try:
                lam = np.linalg.solve(Ms, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(lam)) or np.linalg.cond(Ms) > 1e12:
                continue
            d = -Hinv_g - Hinv_At[:, idx] @ lam
        else:
            lam = np.zeros(0)
            d = -Hinv_g
        if float(np.max(A @ d - b, initial=0.0)) > 1e-9 * (1.0 + float(np.max(np.abs(b)))):
            continue
        obj = float(data.g @ d + 0.5 * d @ data.H @ d)
        if best_d is None or obj < best_obj - 1e-11 * (1.0 + abs(obj)):
            best_obj, best_d, best_set, best_lam = obj, d, S, lam
    if best_d is None:
        return SubproblemSolution(np.zeros(n), np.nan, SubproblemStatus.INFEASIBLE, len(subsets))
    mult = np.zeros(m)
    if best_set:
        mult[list(best_set)] = best_lam
    return SubproblemSolution(best_d, best_obj, SubproblemStatus.OPTIMAL,
                              len(subsets), _split_multipliers(mult, m1, m2, n))


def vertex_enumeration_lp(c, A_ub, b_ub, A_eq=None, b_eq=None,
                          lower=None, upper=None) -> tuple[np.ndarray, float]:
    """LP optimum over basic feasible points, by enumeration (testing only).

    Equality rows are active at every vertex; the remaining active set is
    chosen among inequality rows and finite bounds.  Raises if no feasible
    vertex exists or the enumeration would be too large.
    """
    c = np.asarray(c, dtype=float)
    D = len(c)
    A_ub = np.zeros((0, D)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, D)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, D)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, D)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    lower = np.full(D, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(D, np.inf) if upper is None else np.asarray(upper, dtype=float)

    rows = [A_ub]
    rhs = [b_ub]
    for i in range(D):
        if np.isfinite(upper[i]):
            e = np.zeros(D); e[i] = 1.0
            rows.append(e[None, :]); rhs.append(np.array([upper[i]]))
        if np.isfinite(lower[i]):
            e = np.zeros(D); e[i] = -1.0
            rows.append(e[None, :]); rhs.append(np.array([-lower[i]]))
    R = np.vstack(rows)
    r = np.concatenate(rhs)
    m_eq = len(b_eq)
    need = D - m_eq
    if need < 0:
        raise ValueError("more equality rows than dimensions")
    combos = list(itertools.combinations(range(len(r)), need))
    if len(combos) > _ENUM_CAP:
        raise InstanceTooLargeError("vertex enumeration too large")
    if not combos:
        combos = [()]

    idx = np.array(combos, dtype=int).reshape(len(combos), need)
    E = np.empty((len(combos), D, D))
    rhs_full = np.empty((len(combos), D))
    E[:, :m_eq, :] = A_eq
    rhs_full[:, :m_eq] = b_eq
    if need:
        E[:, m_eq:, :] = R[idx]
        rhs_full[:, m_eq:] = r[idx]

    dets = np.abs(np.linalg.det(E))
    scale = np.maximum(np.prod(np.linalg.norm(E, axis=2), axis=1), 1e-30)
    ok = dets > 1e-10 * scale
    if not np.any(ok):
        raise RuntimeError("no nondegenerate vertex found")
    x = np.linalg.solve(E[ok], rhs_full[ok][..., None])[..., 0]
    # Validate each candidate: exact active rows and global feasibility.
    res_solve = np.max(np.abs(np.einsum("kij,kj->ki", E[ok], x) - rhs_full[ok]), axis=1)
    feas = np.max(R @ x.T - r[:, None], axis=0) if len(r) else np.zeros(len(x))
    eqres = np.max(np.abs(A_eq @ x.T - b_eq[:, None]), axis=0) if m_eq else np.zeros(len(x))
    tol = 1e-9 * (1.0 + float(np.max(np.abs(r), initial=0.0)))
    good = (res_solve < 1e-7) & (feas <= tol) & (eqres <= 1e-7)
    if not np.any(good):
        raise RuntimeError("no feasible vertex found")
    vals = x[good] @ c
    j = int(np.argmin(vals))
    return x[good][j], float(vals[j])


def distance_lp_vertex_oracle(data: DistanceLpData) -> float:
    """Restoration-LP optimal value via vertex enumeration (testing only)."""
    n = data.dim
    if data.sigma_k == 0.0 or len(data.h) + len(data.c) == 0:
        return data.phi
    A, b = _restoration_rows(data)
    c_obj = np.zeros(n + 1)
    c_obj[n] = 1.0
    lower = np.concatenate([np.full(n, -data.sigma_k), [0.0]])
    # y is bounded above by phi at the optimum; cap keeps the region bounded.
    upper = np.concatenate([np.full(n, data.sigma_k), [data.phi + 1.0]])
    _, value = vertex_enumeration_lp(c_obj, A, b, lower=lower, upper=upper)
    return value

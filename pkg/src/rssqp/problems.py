"""Constrained problems with noisy sum-of-squares objectives.

A problem minimizes E[F(x, xi)] with F(x, xi) = sum_i a_i (F_i(x) + xi_i)^2
subject to deterministic constraints h(x) = 0 and c(x) <= 0.  The noise
xi_i ~ N(0, sigma^2) enters each residual component independently, so the
exact objective is sum_i a_i F_i(x)^2 + sigma^2 sum_i a_i and its gradient
is the plain sum-of-squares gradient.

Jacobian convention: grad_h(x) has shape (n, m1), column i holding the
gradient of h_i; same for inequalities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class EvaluationError(RuntimeError):
    """A constraint or objective component evaluated to a non-finite value."""

    def __init__(self, kind: str, index: int, x: np.ndarray):
        self.kind = kind
        self.index = index
        self.x = np.asarray(x, dtype=float).copy()
        super().__init__(f"non-finite {kind} component {index} at x={self.x}")


@dataclass(frozen=True)
class Component:
    """One residual of the objective: weight * (value(x) + noise)^2."""

    weight: float
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


def _empty_vec(x: np.ndarray) -> np.ndarray:
    return np.zeros(0)


def _empty_jac_factory(n: int) -> Callable[[np.ndarray], np.ndarray]:
    def jac(x: np.ndarray) -> np.ndarray:
        return np.zeros((n, 0))

    return jac


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable problem data; all callables are pure functions of x."""

    name: str
    n: int
    components: tuple[Component, ...]
    x0: np.ndarray
    m1: int = 0
    m2: int = 0
    eq: Callable[[np.ndarray], np.ndarray] = _empty_vec
    eq_jac: Callable[[np.ndarray], np.ndarray] | None = None
    ineq: Callable[[np.ndarray], np.ndarray] = _empty_vec
    ineq_jac: Callable[[np.ndarray], np.ndarray] | None = None
    solutions: tuple[np.ndarray, ...] = ()
    sigma: float = 0.0

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("dimension must be positive")
        if self.eq_jac is None:
            object.__setattr__(self, "eq_jac", _empty_jac_factory(self.n))
        if self.ineq_jac is None:
            object.__setattr__(self, "ineq_jac", _empty_jac_factory(self.n))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.x0.shape != (self.n,):
            raise ValueError(f"x0 has shape {self.x0.shape}, expected ({self.n},)")
        sols = tuple(np.asarray(s, dtype=float) for s in self.solutions)
        for s in sols:
            if s.shape != (self.n,):
                raise ValueError("solution point has wrong dimension")
        object.__setattr__(self, "solutions", sols)
        for comp in self.components:
            if not np.isfinite(comp.weight):
                raise ValueError("component weights must be finite")

    @property
    def num_components(self) -> int:
        return len(self.components)

    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def component_values(self, x: np.ndarray) -> np.ndarray:
        vals = np.array([c.value(x) for c in self.components], dtype=float)
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise EvaluationError("objective", bad, x)
        return vals

    def component_grads(self, x: np.ndarray) -> np.ndarray:
        """Stacked gradients, shape (n, num_components)."""
        g = np.column_stack([np.asarray(c.grad(x), dtype=float) for c in self.components])
        if g.size and not np.all(np.isfinite(g)):
            bad = int(np.flatnonzero(~np.isfinite(g).all(axis=0))[0])
            raise EvaluationError("objective-gradient", bad, x)
        return g.reshape(self.n, len(self.components))


@dataclass(frozen=True)
class EvalPoint:
    """Constraint data at a point, plus the l-inf infeasibility phi."""

    x: np.ndarray
    h_val: np.ndarray
    c_val: np.ndarray
    grad_h: np.ndarray
    grad_c: np.ndarray
    phi: float


def infeasibility(h_val: np.ndarray, c_val: np.ndarray) -> float:
    """l-inf distance of (h, c) to {0} x R_-, zero when feasible."""
    phi = 0.0
    if len(h_val):
        phi = float(np.max(np.abs(h_val)))
    if len(c_val):
        phi = max(phi, float(np.max(np.maximum(c_val, 0.0))))
    return phi


def evaluate_constraints(prob: ProblemInstance, x: np.ndarray) -> EvalPoint:
    """Evaluate h, c and their Jacobians at x and compute phi(x)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.n,) or not np.all(np.isfinite(x)):
        raise ValueError(f"x must be a finite vector of dimension {prob.n}")
    h = np.asarray(prob.eq(x), dtype=float).reshape(prob.m1)
    c = np.asarray(prob.ineq(x), dtype=float).reshape(prob.m2)
    if len(h) and not np.all(np.isfinite(h)):
        raise EvaluationError("equality", int(np.flatnonzero(~np.isfinite(h))[0]), x)
    if len(c) and not np.all(np.isfinite(c)):
        raise EvaluationError("inequality", int(np.flatnonzero(~np.isfinite(c))[0]), x)
    gh = np.asarray(prob.eq_jac(x), dtype=float).reshape(prob.n, prob.m1)
    gc = np.asarray(prob.ineq_jac(x), dtype=float).reshape(prob.n, prob.m2)
    if gh.size and not np.all(np.isfinite(gh)):
        raise EvaluationError("equality-jacobian", int(np.flatnonzero(~np.isfinite(gh).all(axis=0))[0]), x)
    if gc.size and not np.all(np.isfinite(gc)):
        raise EvaluationError("inequality-jacobian", int(np.flatnonzero(~np.isfinite(gc).all(axis=0))[0]), x)
    return EvalPoint(x=x.copy(), h_val=h, c_val=c, grad_h=gh, grad_c=gc,
                     phi=infeasibility(h, c))


def constraint_values(prob: ProblemInstance, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Values-only evaluation (no Jacobians); used inside line searches."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(prob.eq(x), dtype=float).reshape(prob.m1)
    c = np.asarray(prob.ineq(x), dtype=float).reshape(prob.m2)
    if len(h) and not np.all(np.isfinite(h)):
        raise EvaluationError("equality", int(np.flatnonzero(~np.isfinite(h))[0]), x)
    if len(c) and not np.all(np.isfinite(c)):
        raise EvaluationError("inequality", int(np.flatnonzero(~np.isfinite(c))[0]), x)
    return h, c, infeasibility(h, c)


def true_objective(prob: ProblemInstance, x: np.ndarray, sigma: float) -> tuple[float, np.ndarray]:
    """Exact mean objective and its gradient.

    E[(F_i + xi)^2] = F_i^2 + sigma^2, so the value carries a constant noise
    offset sigma^2 * sum(a_i) while the gradient does not depend on sigma.
    Diagnostic use only; the solver itself never calls this.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    x = np.asarray(x, dtype=float)
    a = prob.weights()
    vals = prob.component_values(x)
    grads = prob.component_grads(x)
    value = float(a @ (vals * vals) + sigma * sigma * a.sum())
    gradient = grads @ (2.0 * a * vals)
    return value, gradient


class Classification(enum.Enum):
    KKT = "KKT"
    FRITZ_JOHN = "FritzJohn"
    INFEASIBLE_STATIONARY = "InfeasibleStationary"
    NONE = "None"


def classify_stationarity(prob: ProblemInstance, x: np.ndarray,
                          multipliers: tuple[np.ndarray, np.ndarray],
                          tol: float = 1e-6) -> Classification:
    """Classify x using first-order conditions at tolerance tol (l-inf).

    With multipliers (lam for equalities, mu >= 0 for inequalities) the point
    is KKT when stationarity, feasibility and complementarity residuals are
    all within tol.  A Fritz-John point satisfies the same system with the
    objective multiplier set to zero and a nontrivial (lam, mu).  An
    infeasible point whose feasibility-restoration step offers no linearized
    improvement is classified as a stationary point of phi.
    """
    from .subproblems import DistanceLpData, solve_distance_lp

    lam = np.asarray(multipliers[0], dtype=float).reshape(prob.m1)
    mu = np.asarray(multipliers[1], dtype=float).reshape(prob.m2)
    if len(mu) and np.min(mu) < -tol:
        raise ValueError("inequality multipliers must be >= -tol")
    pt = evaluate_constraints(prob, x)
    _, grad_f = true_objective(prob, x, 0.0)

    if pt.phi > tol:
        sigma_box = min(1e6, 2.0 * pt.phi)
        sol = solve_distance_lp(DistanceLpData(pt.h_val, pt.c_val, pt.grad_h, pt.grad_c, sigma_box))
        p = sol.primal[: prob.n]
        delta_phi = pt.phi - sol.objective_value
        if np.max(np.abs(p), initial=0.0) <= max(tol, 1e-10) or delta_phi <= 1e-10 * max(1.0, pt.phi):
            return Classification.INFEASIBLE_STATIONARY
        return Classification.NONE

    feas_ok = pt.phi <= tol
    comp_ok = True
    if len(mu):
        comp_ok = float(np.max(np.abs(mu * pt.c_val))) <= tol
    stat = grad_f + pt.grad_h @ lam + pt.grad_c @ mu
    if feas_ok and comp_ok and float(np.max(np.abs(stat), initial=0.0)) <= tol:
        return Classification.KKT

    scale = max(float(np.max(np.abs(lam), initial=0.0)), float(np.max(np.abs(mu), initial=0.0)))
    if feas_ok and comp_ok and scale > tol:
        fj = pt.grad_h @ lam + pt.grad_c @ mu
        if float(np.max(np.abs(fj), initial=0.0)) <= tol * max(1.0, scale):
            return Classification.FRITZ_JOHN
    return Classification.NONE

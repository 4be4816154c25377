"""Robust SQP drivers: deterministic line search and stochastic step control.

Both drivers share the same iteration skeleton.  At a fresh iterate the
restoration LP is solved inside the box |p| <= sigma_k with
sigma_k = min(sigma_u, kappa_u * phi_k); its optimum kappa_k relaxes the
linearized rows of the direction QP so the QP is always consistent.  The
penalty parameter is raised whenever the model reduction of the penalty
merit falls short of half the direction curvature, and a trial point is
accepted by an Armijo-type test on (estimated) merit values.

The deterministic driver backtracks from a unit step each iteration and
stops at stationarity.  The stochastic driver keeps a persistent step size
(grown on success, cut on failure), re-samples gradient and function
estimates every iteration, caches the restoration data while steps are
rejected, and guards the penalty against outlier gradient estimates by
raising the gradient-accuracy probability along a summable-complement
schedule whenever an estimate's norm overtakes the running threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .merit import (DegeneratePenaltyUpdate, MeritContext, line_search_accept,
                    merit_value, predicted_reduction, update_penalty)
from .problems import (Classification, EvalPoint, ProblemInstance,
                       classify_stationarity, constraint_values,
                       evaluate_constraints, infeasibility, true_objective)
from .sampling import RngStream, required_sample_size, sample_function_pair, sample_gradient
from .subproblems import (DirectionQpData, DistanceLpData, OptimalityLpResult,
                          SubproblemSolution, SubproblemStatus, restoration_step,
                          solve_direction_qp, solve_optimality_lp)


class SubproblemFailure(RuntimeError):
    """A subproblem solve failed in a way the iteration cannot absorb."""

    def __init__(self, stage: str, status: SubproblemStatus, iteration: int):
        self.stage = stage
        self.status = status
        self.iteration = iteration
        super().__init__(f"{stage} failed with {status.value} at iteration {iteration}")


@dataclass
class SolverConfig:
    """Parameters of the drivers; defaults follow the benchmark protocol."""

    sigma_u: float = 1e6
    beta_l: float = 100.0
    beta_u: float = 500.0
    kappa_u: float = 2.0
    rho_0: float = 10.0
    alpha_0: float = 1.0
    alpha_max: float = 2.0
    gamma: float = 2.0
    theta: float = 0.1
    max_iter: int = 1000
    checkpoints: tuple[int, ...] = ()
    zeta_0: float = 1e3
    zeta_c: float = 1.0
    p0_g: float = 0.9
    a0: float = 0.9                      # safeguard schedule a_j = 1-(1-a0)/(j+1)^2
    hessian_policy: Literal["identity", "damped_secant"] = "identity"
    mode: Literal["deterministic", "stochastic"] = "stochastic"
    xi: float = 1e-3                     # secant spectrum floor is 2*xi
    m_h: float = 1e4                     # secant spectrum cap
    zeta_r: float = 1e-8                 # restoration fallback regularization
    sample_size: int = 50
    adaptive_sampling: bool = False
    variance_bound: float = 1.0
    kappa_g: float = 1.0
    n_max: int = 10**6
    tol_step: float = 1e-8               # |d| for the stationary exit
    tol_restoration: float = 1e-10       # |p| for the infeasible exit
    tol_phi: float = 1e-8
    kkt_tol: float = 1e-6
    line_search: Literal["backtracking", "persistent"] = "backtracking"
    max_backtracks: int = 60
    strict_theory: bool = False
    trace: bool = False
    canonical_restoration: bool | None = None   # default: deterministic only

    def __post_init__(self):
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not 0 < self.beta_l <= self.beta_u:
            raise ValueError("need 0 < beta_l <= beta_u")
        if self.alpha_0 <= 0 or self.alpha_0 > self.alpha_max:
            raise ValueError("alpha_0 must lie in (0, alpha_max]")
        j0 = math.log(self.alpha_0 / self.alpha_max) / math.log(self.gamma)
        if abs(j0 - round(j0)) > 1e-9 or round(j0) >= 0:
            raise ValueError("alpha_0 must equal gamma^j0 * alpha_max with integer j0 < 0")
        if not 0 < self.a0 < 1 or self.a0 < self.p0_g:
            raise ValueError("need p0_g <= a0 < 1")
        if self.strict_theory and not 0 < 2 * self.sigma_u < self.beta_l:
            raise ValueError("strict theory ordering 0 < 2*sigma_u < beta_l violated")

    def safeguard_a(self, j: int) -> float:
        """Increasing schedule with summable complements: 1-(1-a0)/(j+1)^2."""
        return 1.0 - (1.0 - self.a0) / (j + 1) ** 2

    def xi_effective(self) -> float:
        # Identity Hessians give d@H@d = |d|^2, i.e. the floor constant 1/2.
        return 0.5 if self.hessian_policy == "identity" else self.xi


@dataclass
class TraceEntry:
    k: int
    x: np.ndarray
    fresh: bool
    phi: float
    sigma_k: float
    kappa: float
    delta_phi: float
    p: np.ndarray
    d: np.ndarray
    g: np.ndarray
    H: np.ndarray | None
    alpha: float
    rho: float
    zeta: float
    p_g: float
    g_dot_d: float
    dHd: float
    pred: float
    psi0: float
    psis: float
    accepted: bool
    num_backtracks: int = 0


@dataclass
class SolverState:
    """One iterate of the stochastic driver, plus cached subproblem data."""

    x: np.ndarray
    k: int = 0
    alpha: float = 1.0
    rho: float = 10.0
    zeta: float = 1e3
    p_g: float = 0.9
    j: int = 1
    last_success: bool = True            # forces a fresh solve at k = 0
    accepted_steps: int = 0
    eta: np.ndarray | None = None        # equality multiplier estimate
    nu_hat: np.ndarray | None = None     # inequality multiplier estimate
    point: EvalPoint | None = None       # cached constraint data at x
    sigma_k: float = 0.0
    kappa: float = 0.0
    p: np.ndarray | None = None          # cached restoration step
    H: np.ndarray | None = None
    prev_x: np.ndarray | None = None     # secant memory
    prev_grad: np.ndarray | None = None
    prev_point: EvalPoint | None = None
    last_d_norm: float = 1.0             # adaptive-sampling reference
    trace: list[TraceEntry] = field(default_factory=list)
    failure: str | None = None


@dataclass
class SolveResult:
    state: SolverState
    classification: Classification
    status: str                          # converged / max_iterations / failed
    iterations: int
    multipliers: tuple[np.ndarray, np.ndarray] | None = None


def _clip_spectrum(H: np.ndarray, lo: float, hi: float) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    w = np.clip(w, lo, hi)
    return (V * w) @ V.T


def hessian_policy_update(state: SolverState, prob: ProblemInstance,
                          config: SolverConfig, grad_now: np.ndarray | None = None
                          ) -> np.ndarray:
    """Model Hessian at a fresh iterate under the configured policy.

    The damped secant policy updates the previous model with a Powell-damped
    BFGS step on the change of the Lagrangian gradient (built from the
    multiplier estimates and the sampled objective gradients at the two most
    recent fresh iterates), then clips the spectrum into [2*xi, m_h].  Any
    non-finite intermediate resets the model to the identity.
    """
    n = prob.n
    if config.hessian_policy == "identity":
        return np.eye(n)
    H_prev = state.H if state.H is not None else np.eye(n)
    if (state.prev_x is None or grad_now is None or state.prev_grad is None
            or state.point is None or state.prev_point is None):
        return _clip_spectrum(H_prev, 2 * config.xi, config.m_h)
    s = state.x - state.prev_x
    if float(np.linalg.norm(s)) < 1e-14:
        return _clip_spectrum(H_prev, 2 * config.xi, config.m_h)
    eta = state.eta if state.eta is not None else np.zeros(prob.m1)
    nu = state.nu_hat if state.nu_hat is not None else np.zeros(prob.m2)
    grad_l_now = grad_now + state.point.grad_h @ eta + state.point.grad_c @ nu
    grad_l_prev = (state.prev_grad + state.prev_point.grad_h @ eta
                   + state.prev_point.grad_c @ nu)
    y = grad_l_now - grad_l_prev
    Bs = H_prev @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if not np.isfinite(sy) or not np.isfinite(sBs) or sBs <= 1e-16:
        return np.eye(n)
    if sy < 0.2 * sBs:   # Powell damping keeps the update positive definite
        tau = 0.8 * sBs / (sBs - sy)
        y = tau * y + (1.0 - tau) * Bs
        sy = float(s @ y)
    H_new = H_prev - np.outer(Bs, Bs) / sBs + np.outer(y, y) / max(sy, 1e-16)
    if not np.all(np.isfinite(H_new)):
        return np.eye(n)
    return _clip_spectrum(H_new, 2 * config.xi, config.m_h)


def _restoration_box(config: SolverConfig, phi: float, beta_k: float) -> float:
    # The benchmark parameters allow sigma_u > beta_l, which could make the
    # restoration step leave the trust box and the direction QP inconsistent;
    # capping the box at beta_k preserves feasibility of d = p.
    sigma = min(config.sigma_u, config.kappa_u * phi)
    return min(sigma, beta_k)


def _fresh_subproblem_data(state: SolverState, prob: ProblemInstance,
                           config: SolverConfig, canonical: bool) -> None:
    point = evaluate_constraints(prob, state.x)
    beta_k = config.beta_l
    sigma_k = _restoration_box(config, point.phi, beta_k)
    data = DistanceLpData(point.h_val, point.c_val, point.grad_h, point.grad_c, sigma_k)
    sol = restoration_step(data, zeta_r=config.zeta_r, canonical=canonical)
    if sol.status != SubproblemStatus.OPTIMAL:
        raise SubproblemFailure("restoration", sol.status, state.k)
    state.point = point
    state.sigma_k = sigma_k
    state.kappa = float(sol.objective_value)
    state.p = sol.primal[: prob.n].copy()


def safeguard_update(zeta: float, p_g: float, j: int, g_norm: float,
                     config: SolverConfig) -> tuple[float, float, int]:
    """Penalty safeguard on the gradient-estimate norm.

    An estimate larger than the running threshold raises the threshold to at
    least zeta + zeta_c and advances the accuracy probability along the a_j
    schedule, so ever-larger estimates must be ever more trustworthy.
    """
    if g_norm > zeta:
        return max(zeta + config.zeta_c, g_norm), config.safeguard_a(j), j + 1
    return zeta, p_g, j


def optimality_chi(prob: ProblemInstance, x: np.ndarray,
                   g_opt: np.ndarray | None = None,
                   config: SolverConfig | None = None
                   ) -> tuple[float | None, float | None]:
    """First-order optimality measure chi, and its estimate when g is given.

    chi is the negated optimum of the box LP over the linearized feasible
    cone with the exact gradient; chi vanishes together with phi exactly at
    first-order stationary points.  Diagnostic only; failures yield None.
    """
    beta_l = (config or SolverConfig()).beta_l
    pt = evaluate_constraints(prob, x)
    _, grad = true_objective(prob, x, 0.0)
    chi = chi_g = None
    res = solve_optimality_lp(grad, pt.grad_h, pt.grad_c, beta_l)
    if res.status == SubproblemStatus.OPTIMAL:
        chi = -res.value
    if g_opt is not None:
        res_g = solve_optimality_lp(np.asarray(g_opt, dtype=float), pt.grad_h, pt.grad_c, beta_l)
        if res_g.status == SubproblemStatus.OPTIMAL:
            chi_g = -res_g.value
    return chi, chi_g


# ---------------------------------------------------------------------------
# Deterministic driver
# ---------------------------------------------------------------------------

def deterministic_sqp_solve(prob: ProblemInstance, config: SolverConfig | None = None
                            ) -> SolveResult:
    """Line-search SQP with exact objective values and gradients.

    Runs until a stationary point is classified or max_iter is reached.  The
    default backtracking mode restarts the step size at 1 every iteration;
    the persistent mode instead carries the stochastic driver's step-size
    dynamics (one trial per iteration, grow on success, cut on failure).
    """
    config = config or SolverConfig(mode="deterministic")
    state = SolverState(x=np.asarray(prob.x0, dtype=float).copy(),
                        alpha=config.alpha_0, rho=config.rho_0, zeta=config.zeta_0,
                        p_g=config.p0_g)
    persistent = config.line_search == "persistent"
    H = np.eye(prob.n)
    classification = Classification.NONE
    status = "max_iterations"
    mults: tuple[np.ndarray, np.ndarray] | None = None

    for k in range(config.max_iter):
        state.k = k
        fresh = state.last_success or state.point is None
        if fresh:
            try:
                _fresh_subproblem_data(state, prob, config, canonical=True)
            except SubproblemFailure as exc:
                state.failure = str(exc)
                return SolveResult(state, Classification.NONE, "failed", k)
            f_val, grad = true_objective(prob, state.x, 0.0)
            H = hessian_policy_update(state, prob, config, grad)
            state.prev_x = state.x.copy()
            state.prev_grad = grad.copy()
            state.prev_point = state.point
            state.H = H
        point = state.point
        phi = point.phi
        delta_phi = max(phi - state.kappa, 0.0)
        p_stationary = (float(np.max(np.abs(state.p), initial=0.0)) <= config.tol_restoration
                        or delta_phi <= 1e-10 * max(1.0, phi))

        qp = solve_direction_qp(DirectionQpData(
            g=grad, H=H, h=point.h_val, c=point.c_val,
            grad_h=point.grad_h, grad_c=point.grad_c,
            kappa_k=state.kappa, beta_k=config.beta_l, warm_start=state.p))
        if qp.status not in (SubproblemStatus.OPTIMAL, SubproblemStatus.MAX_ITERATIONS):
            state.failure = f"direction QP failed with {qp.status.value} at iteration {k}"
            return SolveResult(state, Classification.NONE, "failed", k)
        d = qp.primal
        d_norm = float(np.max(np.abs(d), initial=0.0))
        m = qp.multipliers
        mults = (m.lam_plus - m.mu_plus, m.nu_plus)

        if d_norm <= config.tol_step:
            if phi <= config.tol_phi:
                classification = classify_stationarity(prob, state.x, mults, config.kkt_tol)
                status = "converged"
                break
            if p_stationary:
                # Restoration cannot improve the linearized constraints and
                # the relaxed subproblem offers no direction either: an
                # infeasible stationary point.  Requiring both guards the
                # exit against escapable critical points of phi, where the
                # restoration step vanishes but the objective model still
                # moves the iterate.
                classification = Classification.INFEASIBLE_STATIONARY
                status = "converged"
                break

        g_dot_d = float(grad @ d)
        dHd = float(d @ H @ d)
        ctx = MeritContext(rho=state.rho, theta=config.theta, delta_phi=delta_phi,
                           g_dot_d=g_dot_d, dHd=dHd)
        try:
            state.rho = update_penalty(ctx)
        except DegeneratePenaltyUpdate:
            state.rho *= 2.0
        pred = predicted_reduction(replace(ctx, rho=state.rho))

        psi0 = merit_value(f_val, phi, state.rho)
        accepted = False
        backtracks = 0
        if persistent:
            alpha = state.alpha
            x_trial = state.x + alpha * d
            f_trial, _ = true_objective(prob, x_trial, 0.0)
            _, _, phi_trial = constraint_values(prob, x_trial)
            psis = merit_value(f_trial, phi_trial, state.rho)
            accepted = line_search_accept(psi0, psis, alpha, pred, config.theta)
            state.alpha = min(config.gamma * alpha, config.alpha_max) if accepted \
                else alpha / config.gamma
        else:
            alpha = 1.0
            psis = psi0
            for backtracks in range(config.max_backtracks + 1):
                x_trial = state.x + alpha * d
                f_trial, _ = true_objective(prob, x_trial, 0.0)
                _, _, phi_trial = constraint_values(prob, x_trial)
                psis = merit_value(f_trial, phi_trial, state.rho)
                if line_search_accept(psi0, psis, alpha, pred, config.theta):
                    accepted = True
                    break
                alpha /= config.gamma
        if config.trace:
            state.trace.append(TraceEntry(
                k=k, x=state.x.copy(), fresh=fresh, phi=phi, sigma_k=state.sigma_k,
                kappa=state.kappa, delta_phi=delta_phi, p=state.p.copy(), d=d.copy(),
                g=grad.copy(), H=H.copy(), alpha=alpha, rho=state.rho, zeta=state.zeta,
                p_g=state.p_g, g_dot_d=g_dot_d, dHd=dHd, pred=pred, psi0=psi0,
                psis=psis, accepted=accepted, num_backtracks=backtracks))
        if accepted:
            state.x = state.x + alpha * d
            state.accepted_steps += 1
            state.eta = m.lam_plus - m.mu_plus
            state.nu_hat = m.nu_plus
            state.last_success = True
        else:
            state.last_success = False
            if not persistent:
                # Backtracking exhausted its budget without sufficient
                # decrease: numerical stall.
                state.failure = f"line search stalled at iteration {k}"
                return SolveResult(state, Classification.NONE, "failed", k)
        state.k = k + 1
    else:
        k = config.max_iter

    if status == "max_iterations" and mults is not None:
        classification = classify_stationarity(prob, state.x, mults, config.kkt_tol)
    return SolveResult(state, classification, status, state.k, mults)


# ---------------------------------------------------------------------------
# Stochastic driver
# ---------------------------------------------------------------------------

def stochastic_sqp_step(state: SolverState, prob: ProblemInstance,
                        config: SolverConfig, rng: RngStream) -> SolverState:
    """One iteration of the stochastic driver, mutating and returning state.

    Order of operations: refresh restoration data and the model Hessian on
    fresh iterates, sample the gradient, solve the direction QP, apply the
    gradient-norm safeguard, update the penalty, sample the merit estimates
    at both points and accept or reject the trial step.
    """
    rng_k = rng.with_iteration(state.k)
    sigma = prob.sigma
    canonical = (config.canonical_restoration
                 if config.canonical_restoration is not None else False)
    fresh = state.k == 0 or state.last_success
    sample_n = config.sample_size
    if config.adaptive_sampling:
        d_ref = max(state.last_d_norm, 1e-8)
        sample_n = required_sample_size(config.variance_bound, config.kappa_g,
                                        state.alpha, d_ref, state.p_g,
                                        n_max=config.n_max)
    if fresh:
        _fresh_subproblem_data(state, prob, config, canonical)
        g_est = sample_gradient(prob, state.x, sigma, sample_n, rng_k)
        grad = np.asarray(g_est.value, dtype=float)
        state.H = hessian_policy_update(state, prob, config, grad)
        state.prev_x = state.x.copy()
        state.prev_grad = grad.copy()
        state.prev_point = state.point
    else:
        g_est = sample_gradient(prob, state.x, sigma, sample_n, rng_k)
        grad = np.asarray(g_est.value, dtype=float)

    point = state.point
    phi = point.phi
    delta_phi = max(phi - state.kappa, 0.0)

    qp = solve_direction_qp(DirectionQpData(
        g=grad, H=state.H, h=point.h_val, c=point.c_val,
        grad_h=point.grad_h, grad_c=point.grad_c,
        kappa_k=state.kappa, beta_k=config.beta_l, warm_start=state.p))
    if qp.status not in (SubproblemStatus.OPTIMAL, SubproblemStatus.MAX_ITERATIONS):
        raise SubproblemFailure("direction QP", qp.status, state.k)
    d = qp.primal
    m = qp.multipliers
    state.last_d_norm = float(np.linalg.norm(d))

    g_norm = float(np.linalg.norm(grad))
    state.zeta, state.p_g, state.j = safeguard_update(state.zeta, state.p_g,
                                                      state.j, g_norm, config)

    g_dot_d = float(grad @ d)
    dHd = float(d @ state.H @ d)
    ctx = MeritContext(rho=state.rho, theta=config.theta, delta_phi=delta_phi,
                       g_dot_d=g_dot_d, dHd=dHd)
    try:
        state.rho = update_penalty(ctx)
    except DegeneratePenaltyUpdate:
        state.rho *= 2.0
    pred = predicted_reduction(replace(ctx, rho=state.rho))

    alpha = state.alpha
    x_trial = state.x + alpha * d
    f0_est, fs_est = sample_function_pair(prob, state.x, x_trial, sigma, sample_n, rng_k)
    _, _, phi_trial = constraint_values(prob, x_trial)
    psi0 = merit_value(float(f0_est.value), phi, state.rho)
    psis = merit_value(float(fs_est.value), phi_trial, state.rho)
    accepted = line_search_accept(psi0, psis, alpha, pred, config.theta)

    if config.trace:
        state.trace.append(TraceEntry(
            k=state.k, x=state.x.copy(), fresh=fresh, phi=phi, sigma_k=state.sigma_k,
            kappa=state.kappa, delta_phi=delta_phi, p=state.p.copy(), d=d.copy(),
            g=grad.copy(), H=state.H.copy(), alpha=alpha, rho=state.rho,
            zeta=state.zeta, p_g=state.p_g, g_dot_d=g_dot_d, dHd=dHd, pred=pred,
            psi0=psi0, psis=psis, accepted=accepted))

    if accepted:
        state.x = x_trial
        state.alpha = min(config.gamma * alpha, config.alpha_max)
        state.eta = m.lam_plus - m.mu_plus
        state.nu_hat = m.nu_plus
        state.accepted_steps += 1
        state.last_success = True
    else:
        state.alpha = alpha / config.gamma
        state.last_success = False
    state.k += 1
    return state


@dataclass
class CheckpointRecord:
    k: int
    x: np.ndarray
    phi: float
    rho: float
    alpha: float
    zeta: float
    accepted_steps: int


def stochastic_sqp_solve(prob: ProblemInstance, config: SolverConfig, rng: RngStream
                         ) -> tuple[SolverState, list[CheckpointRecord]]:
    """Run the stochastic driver for max_iter iterations with checkpoints.

    There is no stochastic stopping test; the driver records the iterate at
    every checkpoint count (and at the final iteration) and runs to the end.
    A subproblem failure aborts the run; the failure is recorded on the
    returned state together with the checkpoints reached so far.
    """
    state = SolverState(x=np.asarray(prob.x0, dtype=float).copy(),
                        alpha=config.alpha_0, rho=config.rho_0,
                        zeta=config.zeta_0, p_g=config.p0_g)
    marks = sorted({k for k in config.checkpoints if 0 <= k <= config.max_iter}
                   | {config.max_iter})
    records: list[CheckpointRecord] = []

    def snapshot():
        phi = constraint_values(prob, state.x)[2]
        records.append(CheckpointRecord(state.k, state.x.copy(), phi, state.rho,
                                        state.alpha, state.zeta, state.accepted_steps))

    next_mark = 0
    while next_mark < len(marks) and marks[next_mark] == 0:
        snapshot()
        next_mark += 1
    for _ in range(config.max_iter):
        try:
            stochastic_sqp_step(state, prob, config, rng)
        except SubproblemFailure as exc:
            state.failure = str(exc)
            break
        while next_mark < len(marks) and marks[next_mark] == state.k:
            snapshot()
            next_mark += 1
    if not records or records[-1].k != state.k:
        snapshot()
    return state, records

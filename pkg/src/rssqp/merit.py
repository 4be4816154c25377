"""Exact-penalty merit function, penalty update and acceptance test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegeneratePenaltyUpdate(RuntimeError):
    """Penalty test failed with no linearized feasibility improvement.

    Signals a constraint-qualification failure or numerical breakdown: the
    sufficient-reduction test cannot be restored by any finite penalty.
    Callers are expected to record the event, double the penalty and go on.
    """


@dataclass(frozen=True)
class MeritContext:
    """Inputs of one penalty decision: model slope, curvature, restoration gain."""

    rho: float
    theta: float
    delta_phi: float
    g_dot_d: float
    dHd: float

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("penalty parameter must be positive")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.delta_phi < 0 or self.dHd < 0:
            raise ValueError("delta_phi and dHd must be nonnegative")


def merit_value(f_est: float, phi: float, rho: float) -> float:
    """Penalty merit f + rho * phi; serves exact values and estimates alike."""
    if phi < 0:
        raise ValueError("phi must be nonnegative")
    if rho <= 0:
        raise ValueError("rho must be positive")
    return f_est + rho * phi


def predicted_reduction(ctx: MeritContext) -> float:
    """Model decrease -g@d + rho * delta_phi of the penalty merit."""
    return -ctx.g_dot_d + ctx.rho * ctx.delta_phi


def sufficient_reduction_holds(ctx: MeritContext) -> bool:
    """Whether the direction already yields at least half its curvature."""
    return predicted_reduction(ctx) >= 0.5 * ctx.dHd


def update_penalty(ctx: MeritContext) -> float:
    """New penalty parameter restoring the sufficient-reduction guarantee.

    Keeps rho when -g@d + rho*delta_phi >= dHd/2 already holds; otherwise
    returns max((g@d + dHd/2) / delta_phi, 2 rho), nudged upward by ulps if
    rounding left the guarantee violated, so the post-update inequality
    holds in floating point exactly as it does on paper.
    """
    if sufficient_reduction_holds(ctx):
        return ctx.rho
    if ctx.delta_phi <= 1e-14:
        raise DegeneratePenaltyUpdate(
            f"penalty test failed with delta_phi={ctx.delta_phi:.3e}")
    rho_new = max((ctx.g_dot_d + 0.5 * ctx.dHd) / ctx.delta_phi, 2.0 * ctx.rho)
    # Rounding in the quotient can leave the guarantee short by a few ulps.
    while -ctx.g_dot_d + rho_new * ctx.delta_phi < 0.5 * ctx.dHd:
        rho_new = np.nextafter(rho_new, np.inf)
    return rho_new


def line_search_accept(psi0: float, psis: float, alpha: float,
                       pred: float, theta: float) -> bool:
    """Armijo-type acceptance on merit estimates at the current and trial point."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    return psi0 - psis >= theta * alpha * pred

"""Static rate-allocation oracle: deterministic dual gradient projection.

Solves max sum_s f_s(lam_s) over the per-session feasible boxes, subject to
the total-rate cap R * p_gen and the per-node caps, by iterating the
memoryful price recursion p <- [p + theta * (constraint usage - cap)]^+
with the closed-form primal maximizer at each price. This is the
queue-free counterpart of the live protocol and supplies the fixed point
(lam_hat, p_hat) that simulation trajectories are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .model import lambda_egs, slater_check
from .rcp import PriceVector, make_utility

__all__ = ["NumProblem", "NumSolution", "KktReport", "solve_dual", "verify_kkt", "dual_objective"]


@dataclass(frozen=True)
class NumProblem:
    """Problem data: sessions, constraint set, and the session utility."""

    table: object
    config: object
    utility: object = None

    def __post_init__(self):
        if self.utility is None:
            object.__setattr__(self, "utility", make_utility(self.config.utility))

    def augmented_incidence(self):
        """Constraint-row membership matrix: one all-ones central row, one row per node."""
        return np.vstack([np.ones(len(self.table)), self.table.incidence])

    def lam_bounds(self):
        return self.table.lam_min, self.table.lam_max(self.config.p_gen)

    def primal_rates(self, p):
        """Closed-form maximizer of the Lagrangian at price p, clamped to the boxes."""
        lo, hi = self.lam_bounds()
        p_s = p.p_c + self.table.incidence.T @ p.p_u
        return np.clip(self.utility.inverse_derivative(p_s), lo, hi)


@dataclass(frozen=True)
class NumSolution:
    lam: np.ndarray
    prices: PriceVector
    iterations: int
    residual: float


@dataclass(frozen=True)
class KktReport:
    """Per-condition maximum violation magnitudes."""

    stationarity: float
    primal_feasibility: float
    dual_feasibility: float
    complementary_slackness: float
    tol: float = 1e-8

    @property
    def max_violation(self):
        return max(
            self.stationarity,
            self.primal_feasibility,
            self.dual_feasibility,
            self.complementary_slackness,
        )

    @property
    def ok(self):
        return self.max_violation < self.tol


def solve_dual(problem, tol=1e-10, max_iter=10**6, theta=None, p0=None):
    """Iterate dual gradient projection to a fixed point.

    The step size defaults to half the convergence ceiling,
    0.5 * 2 / (alpha_max * |S|). Stops when the largest price change falls
    below ``tol``; raises ConvergenceError (carrying the last iterate)
    otherwise.
    """
    table, config, utility = problem.table, problem.config, problem.utility
    ok, violations = slater_check(table, config)
    if not ok:
        raise ConvergenceError("Slater condition fails: " + "; ".join(violations))
    lo, hi = problem.lam_bounds()
    alphas = np.array([utility.curvature_bound(lo[k], hi[k]) for k in range(len(table))])
    if theta is None:
        theta = 1.0 / (alphas.max() * len(table))  # half of the 2/(alpha*|S|) ceiling
    le = lambda_egs(config)
    inc = table.incidence
    p_c = 0.0 if p0 is None else float(p0.p_c)
    p_u = np.zeros(config.n_nodes) if p0 is None else np.asarray(p0.p_u, dtype=float).copy()
    lam = np.clip(utility.inverse_derivative(p_c + inc.T @ p_u), lo, hi)
    for it in range(1, max_iter + 1):
        p_c_new = max(p_c + theta * (lam.sum() - le), 0.0)
        p_u_new = np.maximum(p_u + theta * (inc @ lam - config.lam_node), 0.0)
        delta = max(abs(p_c_new - p_c), float(np.max(np.abs(p_u_new - p_u), initial=0.0)))
        p_c, p_u = p_c_new, p_u_new
        lam = np.clip(utility.inverse_derivative(p_c + inc.T @ p_u), lo, hi)
        if delta < tol:
            prices = PriceVector(p_c, p_u)
            report = verify_kkt(problem, lam, prices)
            return NumSolution(lam=lam, prices=prices, iterations=it, residual=report.max_violation)
    raise ConvergenceError(
        f"dual iteration did not converge within {max_iter} iterations",
        last_rates=lam,
        last_prices=PriceVector(p_c, p_u),
        iterations=max_iter,
    )


def verify_kkt(problem, lam, p, tol=1e-8):
    """Check the optimality system at (lam, p).

    Stationarity: lam equals the clamped inverse marginal utility at the
    session prices. Primal feasibility: boxes, total-rate cap, node caps.
    Dual feasibility: non-negative prices. Complementary slackness:
    price * slack per constraint.
    """
    table, config = problem.table, problem.config
    lam = np.asarray(lam, dtype=float)
    lo, hi = problem.lam_bounds()
    le = lambda_egs(config)
    inc = table.incidence

    stationarity = float(np.max(np.abs(lam - problem.primal_rates(p)), initial=0.0))

    central_slack = le - lam.sum()
    node_slack = config.lam_node - inc @ lam
    primal = max(
        float(np.max(lo - lam, initial=0.0)),
        float(np.max(lam - hi, initial=0.0)),
        max(-central_slack, 0.0),
        float(np.max(-node_slack, initial=0.0)),
    )
    dual = max(max(-p.p_c, 0.0), float(np.max(-p.p_u, initial=0.0)))
    comp = max(
        abs(p.p_c * central_slack),
        float(np.max(np.abs(p.p_u * node_slack), initial=0.0)),
    )
    return KktReport(
        stationarity=stationarity,
        primal_feasibility=primal,
        dual_feasibility=dual,
        complementary_slackness=comp,
        tol=tol,
    )


def dual_objective(problem, p):
    """D(p): the per-session suprema of the separable Lagrangian plus cap terms."""
    table, config, utility = problem.table, problem.config, problem.utility
    lam = problem.primal_rates(p)
    p_s = p.p_c + table.incidence.T @ p.p_u
    l_s = utility.value(lam) - lam * p_s
    return float(l_s.sum() + p.p_c * lambda_egs(config) + np.dot(p.p_u, config.lam_node))

"""Rate control: price updates, utility functions, and rate updates.

Prices are Lagrange multipliers of the static rate-allocation problem,
identified with scaled queue sums: the central price is the total queue
scaled by 1 / (R * p_gen) plus a gradient step on the total-rate slack, and
each node price is the node's queue sum scaled by 1 / lam_node plus a step
on its cap slack. Because the queue sum replaces the previous price, the
updates here are memoryless in the price; the memoryful (price-integrating)
form lives in :mod:`egs_control.numopt`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import lambda_egs

__all__ = [
    "PriceVector",
    "UtilityFunction",
    "LogUtility",
    "make_utility",
    "central_price_update",
    "node_price_update",
    "node_prices_vector",
    "session_price",
    "session_prices_vector",
    "rate_update",
    "rates_vector",
    "generic_inverse_derivative",
    "check_step_size_bound",
]


@dataclass(frozen=True)
class PriceVector:
    """Central price plus one price per node, all non-negative."""

    p_c: float
    p_u: np.ndarray

    def __post_init__(self):
        p_u = np.asarray(self.p_u, dtype=float)
        object.__setattr__(self, "p_u", p_u)
        if self.p_c < 0 or np.any(p_u < 0):
            raise ConfigError("prices must be non-negative")

    @classmethod
    def zeros(cls, n_nodes):
        return cls(0.0, np.zeros(n_nodes))


class UtilityFunction:
    """Contract for session utilities.

    Implementations must be increasing, strictly concave, and twice
    continuously differentiable on the session's feasible interval, with
    curvature bounded away from zero: -f''(lam) >= 1 / curvature_bound.
    ``inverse_derivative`` must accept scalars or arrays and map
    non-positive prices to +inf (the unclamped maximizer limit).
    """

    def value(self, lam):
        raise NotImplementedError

    def derivative(self, lam):
        raise NotImplementedError

    def inverse_derivative(self, price):
        """Solve f'(lam) = price; clamping to the feasible interval is the caller's job.

        Implementations without a closed form can delegate to
        :func:`generic_inverse_derivative` over their feasible interval.
        """
        raise NotImplementedError

    def curvature_bound(self, lam_min, lam_max):
        """Smallest alpha with -f''(lam) >= 1/alpha on [lam_min, lam_max]."""
        raise NotImplementedError


class LogUtility(UtilityFunction):
    """Proportional-fairness utility f(lam) = weight * log(lam).

    The weight does not change the optimal allocation (it rescales every
    session identically), but it multiplies the dual prices and therefore
    the equilibrium queue levels under the queue identification. Since
    queues are integers, a larger weight gives the identified prices finer
    granularity and the live protocol a smaller discretization bias.
    """

    def __init__(self, weight=1.0):
        if weight <= 0:
            raise ConfigError("utility weight must be positive")
        self.weight = float(weight)

    def value(self, lam):
        return self.weight * np.log(lam)

    def derivative(self, lam):
        return self.weight / np.asarray(lam, dtype=float)

    def inverse_derivative(self, price):
        price = np.asarray(price, dtype=float)
        out = np.full(price.shape, np.inf)
        np.divide(self.weight, price, out=out, where=price > 0)
        return out if out.ndim else float(out)

    def curvature_bound(self, lam_min, lam_max):
        # -f'' = weight/lam^2 is smallest at lam_max
        return lam_max**2 / self.weight


def make_utility(name):
    """Resolve a utility spec: "log" or "log:<weight>"."""
    if name == "log":
        return LogUtility()
    if isinstance(name, str) and name.startswith("log:"):
        try:
            return LogUtility(weight=float(name.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad utility weight in {name!r}") from None
    raise ConfigError(f"unknown utility {name!r}")


def central_price_update(q, lam, config, lam_egs=None):
    """New central price from the queue total and the total-rate slack.

    ``lam_egs`` overrides R * p_gen when the live resource count differs
    from the configured one.
    """
    le = lambda_egs(config) if lam_egs is None else lam_egs
    q = np.asarray(q, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return float(max(q.sum() / le + config.theta_c * (lam.sum() - le), 0.0))


def node_price_update(u, q, lam, table, config):
    """New price of node ``u`` from its queue sum and cap slack."""
    lam_u = config.lam_node[u]
    if lam_u <= 0:
        raise ConfigError(f"node cap lam_node[{u}] must be positive")
    ks = table.sessions_of_node(u)
    q = np.asarray(q, dtype=float)
    lam = np.asarray(lam, dtype=float)
    qs = q[ks].sum() if ks else 0.0
    ls = lam[ks].sum() if ks else 0.0
    return float(max(qs / lam_u + config.theta_u[u] * (ls - lam_u), 0.0))


def node_prices_vector(q, lam, table, config, lam_node=None):
    """All node prices at once (engine's vector form of node_price_update)."""
    lam_node = config.lam_node if lam_node is None else lam_node
    if np.any(lam_node <= 0):
        raise ConfigError("node caps must be positive")
    inc = table.incidence
    node_q = inc @ np.asarray(q, dtype=float)
    node_lam = inc @ np.asarray(lam, dtype=float)
    return np.maximum(node_q / lam_node + config.theta_u * (node_lam - lam_node), 0.0)


def session_price(s, p, table=None):
    """Aggregate price seen by session s: p_c + p_i + p_j."""
    if table is not None and not hasattr(s, "members"):
        s = table.sessions[s]
    i, j = s.members()
    return float(p.p_c + p.p_u[i] + p.p_u[j])


def session_prices_vector(p, table):
    return p.p_c + table.incidence.T @ p.p_u


def rate_update(s, p, utility, table, config):
    """New rate for session s: the clamped inverse marginal utility at its price.

    A zero session price maps to the upper clamp (the limit of the
    unbounded inverse).
    """
    k = table.index_of(s) if hasattr(s, "members") else int(s)
    p_s = session_price(table.sessions[k], p)
    lo = table.lam_min[k]
    hi = table.x[k] * config.p_gen
    lam = utility.inverse_derivative(p_s)
    return float(min(max(lam, lo), hi))


def rates_vector(p, utility, table, config):
    lam = utility.inverse_derivative(session_prices_vector(p, table))
    return np.clip(lam, table.lam_min, table.lam_max(config.p_gen))


def generic_inverse_derivative(utility, p_s, lam_lo, lam_hi, tol=1e-12):
    """Numeric inverse of f' by bisection on [lam_lo, lam_hi].

    Valid for any utility meeting the contract (f' continuous, strictly
    decreasing). Prices outside [f'(lam_hi), f'(lam_lo)] return the
    corresponding boundary.
    """
    if p_s <= utility.derivative(lam_hi):
        return float(lam_hi)
    if p_s >= utility.derivative(lam_lo):
        return float(lam_lo)
    lo, hi = float(lam_lo), float(lam_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if utility.derivative(mid) > p_s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def check_step_size_bound(config, table, utility=None):
    """Enforce the convergence precondition theta < 2 / (alpha_max * |S|).

    alpha_max is the largest per-session curvature bound over the feasible
    intervals. Raises ConfigError unless the config sets
    ``allow_step_override``; returns the bound either way.
    """
    utility = utility if utility is not None else make_utility(config.utility)
    hi = table.lam_max(config.p_gen)
    alphas = np.array(
        [utility.curvature_bound(table.lam_min[k], hi[k]) for k in range(len(table))]
    )
    bound = 2.0 / (alphas.max() * len(table))
    thetas = np.append(config.theta_u, config.theta_c)
    if np.any(thetas >= bound) or np.any(thetas <= 0):
        if not config.allow_step_override:
            raise ConfigError(
                f"step sizes must lie in (0, {bound:.6g}) for |S|={len(table)};"
                f" got theta_c={config.theta_c}, max theta_u={config.theta_u.max()}"
                " (set allow_step_override to run anyway)"
            )
    return bound

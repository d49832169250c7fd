"""Domain model: sessions, switch configuration, and feasibility predicates.

A switch with ``R`` shared entanglement-generation resources serves a set of
communication sessions (ordered node pairs). The model types here are
immutable after construction; all predicates are pure functions and safe to
call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError

__all__ = [
    "SessionId",
    "SessionTable",
    "EgsConfig",
    "CapacityVerdict",
    "total_service_rate",
    "lambda_egs",
    "capacity_check",
    "slater_check",
    "feasible_rate_region_clamp",
    "default_lam_min",
]


@dataclass(frozen=True, order=True)
class SessionId:
    """An ordered, distinct node pair (i < j)."""

    i: int
    j: int

    def __post_init__(self):
        if not (0 <= self.i < self.j):
            raise ConfigError(f"session pair must satisfy 0 <= i < j, got ({self.i}, {self.j})")

    def members(self):
        return (self.i, self.j)


class SessionTable:
    """The set of communication sessions and their per-session parameters.

    Parameters
    ----------
    n_nodes:
        Number of network nodes N. All session indices must be < N.
    sessions:
        Sequence of SessionId (or (i, j) tuples), duplicate-free.
    x:
        Per-session cap on resources per slot (scalar or per-session array).
    lam_min:
        Per-session minimum acceptable rate, strictly positive (scalar or
        per-session array).
    designated:
        Optional per-session designated communication node; defaults to the
        lower-indexed node of each pair.
    """

    def __init__(self, n_nodes, sessions, x=1, lam_min=1e-4, designated=None):
        sessions = tuple(s if isinstance(s, SessionId) else SessionId(*s) for s in sessions)
        if len(set(sessions)) != len(sessions):
            raise ConfigError("duplicate sessions in table")
        for s in sessions:
            if s.j >= n_nodes:
                raise ConfigError(f"session {s} references node >= n_nodes={n_nodes}")
        self.n_nodes = int(n_nodes)
        self.sessions = sessions
        n = len(sessions)
        self.x = np.broadcast_to(np.asarray(x, dtype=np.int64), (n,)).copy()
        if np.any(self.x < 1):
            raise ConfigError("per-session resource cap x must be >= 1")
        self.lam_min = np.broadcast_to(np.asarray(lam_min, dtype=float), (n,)).copy()
        if np.any(self.lam_min <= 0):
            raise ConfigError("lam_min must be strictly positive")
        if designated is None:
            designated = [s.i for s in sessions]
        self.designated = np.asarray(designated, dtype=np.int64)
        if not all(d in s.members() for d, s in zip(self.designated, sessions)):
            raise ConfigError("designated node must be a member of its session")
        # node -> session positions, plus dense incidence used by the engine
        self._by_node = [[] for _ in range(self.n_nodes)]
        for k, s in enumerate(sessions):
            self._by_node[s.i].append(k)
            self._by_node[s.j].append(k)
        inc = np.zeros((self.n_nodes, n), dtype=float)
        for u, ks in enumerate(self._by_node):
            inc[u, ks] = 1.0
        self._incidence = inc
        self._incidence.setflags(write=False)
        self.x.setflags(write=False)
        self.lam_min.setflags(write=False)

    def __len__(self):
        return len(self.sessions)

    def index_of(self, session):
        if not isinstance(session, SessionId):
            session = SessionId(*session)
        return self.sessions.index(session)

    def sessions_of_node(self, u):
        """Positions of the sessions node ``u`` participates in."""
        return list(self._by_node[u])

    @property
    def incidence(self):
        """Dense node-by-session membership matrix (N x |S|)."""
        return self._incidence

    def lam_max(self, p_gen):
        """Per-session service-rate ceiling x_s * p_gen."""
        return self.x * p_gen

    def replace(self, **kwargs):
        base = dict(
            n_nodes=self.n_nodes,
            sessions=self.sessions,
            x=self.x,
            lam_min=self.lam_min,
            designated=self.designated,
        )
        base.update(kwargs)
        return SessionTable(**base)


@dataclass(frozen=True)
class EgsConfig:
    """Switch-level constraint set and protocol step sizes.

    ``lam_node`` is the per-node rate cap (length N). ``theta_c`` and
    ``theta_u`` are the central and per-node step sizes; the convergence
    bound theta < 2 / (alpha_max * |S|) is enforced against a session table
    by :func:`egs_control.rcp.check_step_size_bound`, since the bound
    depends on the session count.
    """

    n_nodes: int
    n_resources: int
    p_gen: float
    lam_node: np.ndarray
    theta_c: float
    theta_u: np.ndarray = None
    utility: str = "log"
    allow_step_override: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_gen <= 1.0:
            raise ConfigError(f"p_gen must be in [0, 1], got {self.p_gen}")
        if self.n_resources < 0:
            raise ConfigError("n_resources must be non-negative")
        if self.n_resources * self.p_gen <= 0.0:
            raise ConfigError("total service rate R * p_gen must be positive")
        lam_node = np.broadcast_to(np.asarray(self.lam_node, dtype=float), (self.n_nodes,)).copy()
        lam_node.setflags(write=False)
        object.__setattr__(self, "lam_node", lam_node)
        theta_u = self.theta_c if self.theta_u is None else self.theta_u
        theta_u = np.broadcast_to(np.asarray(theta_u, dtype=float), (self.n_nodes,)).copy()
        theta_u.setflags(write=False)
        object.__setattr__(self, "theta_u", theta_u)
        if self.theta_c <= 0 or np.any(self.theta_u <= 0):
            raise ConfigError("step sizes must be positive")

    @property
    def lambda_egs(self):
        return total_service_rate(self.n_resources, self.p_gen)

    def replace(self, **kwargs):
        from dataclasses import replace as _replace

        return _replace(self, **kwargs)


@dataclass(frozen=True)
class CapacityVerdict:
    """Result of the strict interior test of the capacity region."""

    inside_interior: bool
    binding_constraints: tuple = field(default_factory=tuple)

    def __post_init__(self):
        assert self.inside_interior == (len(self.binding_constraints) == 0)


def total_service_rate(n_resources, p_gen):
    """Maximum average delivery rate of the switch, R * p_gen."""
    return n_resources * p_gen


def lambda_egs(config):
    """Total service rate R * p_gen of a configured switch."""
    return total_service_rate(config.n_resources, config.p_gen)


def capacity_check(lam, config, table):
    """Strict interior test of the capacity region.

    A rate vector is inside the interior iff every component is
    non-negative, the total rate is strictly below R * p_gen, and each
    component is strictly below its session ceiling x_s * p_gen. Boundary
    points report as not-interior (no epsilon slack).
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (len(table),):
        raise DimensionError(f"rate vector has {lam.shape} components, expected {len(table)}")
    binding = []
    for k in np.nonzero(lam < 0)[0]:
        binding.append(f"negativity: lambda[{k}] = {lam[k]} < 0")
    total = lam.sum()
    cap = lambda_egs(config)
    if not total < cap:
        binding.append(f"total-rate: sum(lambda) = {total} >= {cap}")
    ceil = table.lam_max(config.p_gen)
    for k in np.nonzero(~(lam < ceil))[0]:
        s = table.sessions[k]
        binding.append(f"per-session: lambda[{k}] = {lam[k]} >= x*p_gen = {ceil[k]} for {s}")
    return CapacityVerdict(inside_interior=not binding, binding_constraints=tuple(binding))


def slater_check(table, config):
    """Strict feasibility of the minimal-rate vector.

    Returns ``(ok, violations)``; ok iff sum(lam_min) < R * p_gen and, for
    every node u, the sum of lam_min over the sessions of u is strictly
    below the node cap.
    """
    violations = []
    total = table.lam_min.sum()
    cap = lambda_egs(config)
    if not total < cap:
        violations.append(f"total: sum(lam_min) = {total} >= lambda_egs = {cap}")
    node_sums = table.incidence @ table.lam_min
    for u in np.nonzero(~(node_sums < config.lam_node))[0]:
        violations.append(
            f"node {u}: sum(lam_min over sessions of node) = {node_sums[u]}"
            f" >= lam_node = {config.lam_node[u]}"
        )
    return (not violations, violations)


def feasible_rate_region_clamp(lam_s, s, table, config):
    """Project a scalar rate onto [lam_min_s, x_s * p_gen] for session s."""
    k = table.index_of(s)
    lo = table.lam_min[k]
    hi = table.x[k] * config.p_gen
    if lo > hi:
        raise ConfigError(f"empty feasible rate region for {s}: lam_min={lo} > x*p_gen={hi}")
    return float(min(max(lam_s, lo), hi))


def default_lam_min(config, n_sessions):
    """Default per-session floor: 0.1 * R * p_gen / |S|.

    Guarantees the total-rate part of the Slater condition with a 10x
    margin; per-node caps are still checked explicitly.
    """
    return 0.1 * lambda_egs(config) / n_sessions

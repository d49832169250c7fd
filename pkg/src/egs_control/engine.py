"""Per-slot simulation loop binding traffic, scheduling, and rate control.

Slot ordering (one slot): generation attempts for the schedule computed in
the previous slot, then demand arrivals at the current rates, then the
queue update q <- [q + a - g]^+, then the next slot's schedule from the
pre-arrival queue snapshot, then node and central prices from the updated
queues, then next-slot rates from those prices. Scenario events (live
resource-count or node-cap changes) apply between slots, effective at the
start of their slot.

A single run is strictly sequential. The ensemble is an independent map
over seeded runs whose only cross-run interaction is a point-wise mean, so
results are independent of execution order; for speed the runs are stepped
in lockstep as rows of (n_runs, |S|) arrays, which is arithmetic-identical
to stepping them separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import SessionTable, default_lam_min, slater_check, total_service_rate
from .rcp import LogUtility, PriceVector, make_utility
from .scheduler import Schedule
from .traffic import (
    PURPOSE_DEMAND,
    PURPOSE_SCHEDULER,
    PURPOSE_SETUP,
    PURPOSE_SUCCESS,
    RngStream,
    TrafficStreams,
)

__all__ = [
    "ScenarioEvent",
    "SlotState",
    "SlotMetrics",
    "Trace",
    "EpochStats",
    "RunSummary",
    "step",
    "run",
    "ensemble",
    "sample_sessions",
]


@dataclass(frozen=True)
class ScenarioEvent:
    """A constraint change applied at the start of ``at_slot``."""

    at_slot: int
    kind: str  # "resources" | "node_cap"
    value: float
    node: int = None

    def __post_init__(self):
        if self.kind not in ("resources", "node_cap"):
            raise ConfigError(f"unknown scenario event kind {self.kind!r}")
        if self.kind == "resources" and self.value < 0:
            raise ConfigError("resource count cannot be negative")
        if self.kind == "node_cap" and self.node is None:
            raise ConfigError("node_cap event requires a node index")


@dataclass
class SlotState:
    """Joint state at the start of a slot.

    ``schedule`` is the allocation executing this slot (computed from the
    previous slot's pre-arrival queues).
    """

    t: int
    q: np.ndarray
    lam: np.ndarray
    prices: PriceVector
    schedule: Schedule
    r_current: int
    lam_node: np.ndarray = None


@dataclass(frozen=True)
class SlotMetrics:
    t: int
    sum_lambda: float
    sum_q: float
    max_rate: float
    min_rate: float


@dataclass
class Trace:
    """Struct-of-arrays metrics trace, one entry per slot."""

    slot: np.ndarray
    sum_lambda: np.ndarray
    sum_q: np.ndarray
    max_rate: np.ndarray
    min_rate: np.ndarray

    def __len__(self):
        return len(self.slot)

    def __getitem__(self, t):
        return SlotMetrics(
            t=int(self.slot[t]),
            sum_lambda=float(self.sum_lambda[t]),
            sum_q=float(self.sum_q[t]),
            max_rate=float(self.max_rate[t]),
            min_rate=float(self.min_rate[t]),
        )


@dataclass(frozen=True)
class EpochStats:
    """Convergence report for one constant-R stretch of the run."""

    start: int
    end: int
    n_resources: int
    lam_target: float
    delta_tau: int  # absolute slot of first crossing; None if never crossed
    delta: float  # post-crossing fluctuation envelope (pooled 99th pct)
    converged: bool


@dataclass
class RunSummary:
    trace: Trace
    epochs: list
    delta_tau: int
    delta: float
    converged: bool
    mean_tail_rates: np.ndarray
    tail_window: int
    n_runs: int
    master_seed: int
    horizon: int
    final_sum_q: float = 0.0
    extras: dict = field(default_factory=dict)


class _Kernel:
    """Lockstep simulator for a batch of independently seeded runs."""

    def __init__(
        self,
        config,
        table,
        master_seed,
        run_indices,
        rcp_enabled=True,
        initial_rates=None,
        initial_backlog=0,
        state=None,
    ):
        self.config = config
        self.table = table
        self.utility = make_utility(config.utility)
        self.n_runs = len(run_indices)
        n = len(table)
        self.x_max = int(table.x.max())
        self.streams = [
            TrafficStreams(master_seed, i, n, self.x_max) for i in run_indices
        ]
        self.inc = table.incidence
        self.lam_lo = table.lam_min
        self.lam_hi = table.lam_max(config.p_gen)
        self.rcp_enabled = rcp_enabled
        self.r_current = config.n_resources
        self.lam_node = np.asarray(config.lam_node, dtype=float).copy()
        self.t = 0
        shape = (self.n_runs, n)
        if state is None:
            backlog = np.asarray(initial_backlog, dtype=np.int64)
            if np.any(backlog < 0):
                raise ConfigError("initial_backlog must be non-negative")
            self.q = np.broadcast_to(backlog, shape).astype(np.int64).copy()
            lam0 = table.lam_min if initial_rates is None else np.asarray(initial_rates, float)
            self.lam = np.broadcast_to(lam0, shape).astype(float).copy()
            self.p_c = np.zeros(self.n_runs)
            self.p_u = np.zeros((self.n_runs, config.n_nodes))
            self.m = np.zeros(shape, dtype=np.int64)
        else:
            self.t = state.t
            self.q = np.broadcast_to(state.q, shape).astype(np.int64).copy()
            self.lam = np.broadcast_to(state.lam, shape).astype(float).copy()
            self.p_c = np.full(self.n_runs, state.prices.p_c, dtype=float)
            self.p_u = np.broadcast_to(state.prices.p_u, (self.n_runs, config.n_nodes)).astype(float).copy()
            self.m = np.broadcast_to(state.schedule.alloc, shape).astype(np.int64).copy()
            self.r_current = state.r_current
            if state.lam_node is not None:
                self.lam_node = np.asarray(state.lam_node, dtype=float).copy()
        # accounting for conservation checks
        self.cum_arrivals = np.zeros(shape, dtype=np.int64)
        self.cum_served = np.zeros(shape, dtype=np.int64)
        # random blocks, refilled every _block slots
        self._block = max(16, min(256, (1 << 22) // max(1, self.n_runs * n)))
        self._bpos = self._block  # force refill on first use
        self._dem = self._suc = self._tie = None
        self._x_arange = np.arange(self.x_max)[None, None, :]

    def _refill(self):
        b, nr, n = self._block, self.n_runs, len(self.table)
        self._dem = np.empty((b, nr, n))
        self._suc = np.empty((b, nr, n, self.x_max))
        self._tie = np.empty((b, nr, n))
        for i, st in enumerate(self.streams):
            self._dem[:, i, :] = st.demand.random((b, n))
            self._suc[:, i, :, :] = st.success.random((b, n, self.x_max))
            self._tie[:, i, :] = st.scheduler.random((b, n))
        self._bpos = 0

    def advance(self):
        """Execute one slot for every run; returns per-run slot metrics."""
        if self._bpos >= self._block:
            self._refill()
        u_dem = self._dem[self._bpos]
        u_suc = self._suc[self._bpos]
        tie = self._tie[self._bpos]
        self._bpos += 1

        cfg = self.config
        lam = self.lam
        q0 = self.q

        sum_lam = lam.sum(axis=1)
        max_rate = lam.max(axis=1)
        min_rate = lam.min(axis=1)

        # 1) generation attempts for the schedule computed last slot
        g = ((u_suc < cfg.p_gen) & (self._x_arange < self.m[:, :, None])).sum(axis=2)
        # 2) demand arrivals at the current rates
        base = np.floor(lam)
        a = base.astype(np.int64) + (u_dem < (lam - base))
        # 3) queue update with non-negativity projection
        q1 = q0 + a - g
        np.maximum(q1, 0, out=q1)
        self.cum_arrivals += a
        self.cum_served += q0 + a - q1  # effective removals (raw g may overshoot an empty queue)

        # 4) next slot's schedule from the pre-arrival snapshot q0
        cap = np.minimum(q0, self.table.x)
        order = np.argsort(-(q0 + tie), axis=1)
        cap_sorted = np.take_along_axis(cap, order, axis=1)
        cum = np.cumsum(cap_sorted, axis=1)
        take = np.minimum(cap_sorted, self.r_current - cum + cap_sorted)
        np.clip(take, 0, None, out=take)
        m_next = np.empty_like(cap)
        np.put_along_axis(m_next, order, take, axis=1)

        # 5) prices from the post-update queues, then next-slot rates
        if self.rcp_enabled:
            lam_egs_cur = total_service_rate(self.r_current, cfg.p_gen)
            qf = q1.astype(float)
            node_q = qf @ self.inc.T
            node_lam = lam @ self.inc.T
            p_u = node_q / self.lam_node + cfg.theta_u * (node_lam - self.lam_node)
            np.maximum(p_u, 0.0, out=p_u)
            p_c = qf.sum(axis=1) / lam_egs_cur + cfg.theta_c * (sum_lam - lam_egs_cur)
            np.maximum(p_c, 0.0, out=p_c)
            p_s = p_c[:, None] + p_u @ self.inc
            if isinstance(self.utility, LogUtility):
                inv = np.full_like(p_s, np.inf)
                np.divide(self.utility.weight, p_s, out=inv, where=p_s > 0)
            else:
                inv = np.asarray(self.utility.inverse_derivative(p_s), dtype=float)
            self.lam = np.clip(inv, self.lam_lo, self.lam_hi)
            self.p_c, self.p_u = p_c, p_u

        self.q = q1
        self.m = m_next
        self.t += 1
        sum_q = q1.sum(axis=1).astype(float)
        return sum_lam, sum_q, max_rate, min_rate

    def state(self, row=0):
        return SlotState(
            t=self.t,
            q=self.q[row].copy(),
            lam=self.lam[row].copy(),
            prices=PriceVector(float(self.p_c[row]), self.p_u[row].copy()),
            schedule=Schedule(self.m[row].copy()),
            r_current=self.r_current,
            lam_node=self.lam_node.copy(),
        )


def step(state, config, table, streams):
    """Advance a single run by one slot; returns (new state, slot metrics)."""
    kernel = _Kernel.__new__(_Kernel)
    kernel.config = config
    kernel.table = table
    kernel.utility = make_utility(config.utility)
    kernel.n_runs = 1
    kernel.x_max = int(table.x.max())
    kernel.inc = table.incidence
    kernel.lam_lo = table.lam_min
    kernel.lam_hi = table.lam_max(config.p_gen)
    kernel.rcp_enabled = True
    kernel.r_current = state.r_current
    kernel.lam_node = (
        np.asarray(config.lam_node, float).copy()
        if state.lam_node is None
        else np.asarray(state.lam_node, float).copy()
    )
    kernel.t = state.t
    n = len(table)
    kernel.q = np.asarray(state.q, dtype=np.int64).reshape(1, n).copy()
    kernel.lam = np.asarray(state.lam, dtype=float).reshape(1, n).copy()
    kernel.p_c = np.array([state.prices.p_c], dtype=float)
    kernel.p_u = np.asarray(state.prices.p_u, dtype=float).reshape(1, -1).copy()
    kernel.m = np.asarray(state.schedule.alloc, dtype=np.int64).reshape(1, n).copy()
    kernel.cum_arrivals = np.zeros((1, n), dtype=np.int64)
    kernel.cum_served = np.zeros((1, n), dtype=np.int64)
    kernel._x_arange = np.arange(kernel.x_max)[None, None, :]
    # one-slot random input served straight from the per-run streams
    kernel._block = 1
    kernel._bpos = 0
    kernel._dem = streams.demand_uniforms()[None, None, :]
    kernel._suc = streams.success_uniforms()[None, None, :, :]
    kernel._tie = streams.tie_uniforms()[None, None, :]
    sum_lam, sum_q, max_rate, min_rate = kernel.advance()
    metrics = SlotMetrics(
        t=state.t,
        sum_lambda=float(sum_lam[0]),
        sum_q=float(sum_q[0]),
        max_rate=float(max_rate[0]),
        min_rate=float(min_rate[0]),
    )
    return kernel.state(), metrics


def _scenario_map(scenario):
    events = {}
    last = -1
    for ev in sorted(scenario or [], key=lambda e: e.at_slot):
        if ev.at_slot < 0:
            raise ConfigError("scenario event slots must be non-negative")
        if ev.at_slot < last:
            raise ConfigError("scenario events must be sorted by slot")
        last = ev.at_slot
        events.setdefault(ev.at_slot, []).append(ev)
    return events


def _check_scenario_slater(config, table, scenario):
    """Slater feasibility must hold under every epoch's constraint set."""
    r = config.n_resources
    lam_node = np.asarray(config.lam_node, float).copy()
    stages = [(r, lam_node.copy())]
    for ev in sorted(scenario or [], key=lambda e: e.at_slot):
        if ev.kind == "resources":
            r = int(ev.value)
        else:
            lam_node[ev.node] = ev.value
        stages.append((r, lam_node.copy()))
    for r_i, caps in stages:
        probe = config.replace(n_resources=r_i, lam_node=caps)
        ok, violations = slater_check(table, probe)
        if not ok:
            raise ConfigError(
                f"Slater condition fails at scenario stage R={r_i}: " + "; ".join(violations)
            )


def _simulate(
    config,
    table,
    scenario,
    horizon,
    master_seed,
    run_indices,
    rcp_enabled=True,
    initial_rates=None,
    initial_backlog=0,
    tail_window=10000,
):
    events = _scenario_map(scenario)
    kernel = _Kernel(
        config,
        table,
        master_seed,
        run_indices,
        rcp_enabled=rcp_enabled,
        initial_rates=initial_rates,
        initial_backlog=initial_backlog,
    )
    nr = kernel.n_runs
    mean = {
        "sum_q": np.empty(horizon),
        "max_rate": np.empty(horizon),
        "min_rate": np.empty(horizon),
    }
    per_run_sum_lambda = np.empty((horizon, nr))
    tail_start = max(0, horizon - tail_window)
    tail_sum = np.zeros((nr, len(table)))
    for t in range(horizon):
        for ev in events.get(t, ()):
            if ev.kind == "resources":
                kernel.r_current = int(ev.value)
            else:
                kernel.lam_node[ev.node] = float(ev.value)
        if t >= tail_start:
            tail_sum += kernel.lam
        sum_lam, sum_q, max_rate, min_rate = kernel.advance()
        per_run_sum_lambda[t] = sum_lam
        mean["sum_q"][t] = sum_q.mean()
        mean["max_rate"][t] = max_rate.mean()
        mean["min_rate"][t] = min_rate.mean()
    trace = Trace(
        slot=np.arange(horizon),
        sum_lambda=per_run_sum_lambda.mean(axis=1),
        **mean,
    )
    denom = max(1, horizon - tail_start)
    tail_rates = tail_sum / denom
    return trace, tail_rates, per_run_sum_lambda, kernel


def _epoch_bounds(config, scenario, horizon):
    bounds = [(0, config.n_resources)]
    for ev in sorted(scenario or [], key=lambda e: e.at_slot):
        if ev.kind == "resources" and 0 < ev.at_slot < horizon:
            bounds.append((ev.at_slot, int(ev.value)))
        elif ev.kind == "resources" and ev.at_slot == 0:
            bounds[0] = (0, int(ev.value))
    epochs = []
    for k, (start, r) in enumerate(bounds):
        end = bounds[k + 1][0] if k + 1 < len(bounds) else horizon
        if end > start:
            epochs.append((start, end, r))
    return epochs


_FLUCTUATION_QUANTILE = 0.99


def _epoch_stats(trace_sum_lambda, per_run_sum_lambda, epochs, p_gen):
    """Per-epoch convergence time and fluctuation envelope.

    The crossing is detected on the ensemble-mean trace. The tightness
    value is the 99th-percentile magnitude of the post-crossing deviation
    from the target, pooled over every run and slot, which tracks the
    visible fluctuation band of the traces while staying insensitive to
    isolated single-slot excursions.
    """
    stats = []
    for start, end, r in epochs:
        target = total_service_rate(r, p_gen)
        d = trace_sum_lambda[start:end] - target
        s0 = np.sign(d[0])
        if s0 == 0:
            k = 0
        else:
            flipped = np.sign(d) != s0
            k = int(np.argmax(flipped)) if flipped.any() else None
        if k is None:
            stats.append(EpochStats(start, end, r, target, None, None, False))
        else:
            dev = np.abs(per_run_sum_lambda[start + k : end] - target)
            delta = float(np.quantile(dev, _FLUCTUATION_QUANTILE))
            stats.append(EpochStats(start, end, r, target, start + k, delta, True))
    return stats


def run(
    config,
    table,
    scenario=None,
    horizon=10000,
    master_seed=0,
    run_index=0,
    rcp_enabled=True,
    initial_rates=None,
    initial_backlog=0,
    tail_window=10000,
):
    """Simulate one seeded run; returns (Trace, final SlotState).

    Initial conditions: rates at their per-session floors (unless
    ``initial_rates`` overrides), zero prices, per-session queues at
    ``initial_backlog`` (a standing demand backlog; scalar or per-session),
    and no schedule in the first slot. ``rcp_enabled=False`` pins the rates
    for the whole run.
    """
    if rcp_enabled:
        _check_scenario_slater(config, table, scenario)
    trace, tail_rates, _, kernel = _simulate(
        config,
        table,
        scenario,
        horizon,
        master_seed,
        [run_index],
        rcp_enabled=rcp_enabled,
        initial_rates=initial_rates,
        initial_backlog=initial_backlog,
        tail_window=tail_window,
    )
    state = kernel.state()
    state.tail_mean_rates = tail_rates[0]
    state.cum_arrivals = kernel.cum_arrivals[0]
    state.cum_served = kernel.cum_served[0]
    return trace, state


def ensemble(
    config,
    table,
    scenario=None,
    horizon=10000,
    n_runs=1,
    master_seed=0,
    rcp_enabled=True,
    initial_rates=None,
    initial_backlog=0,
    tail_window=10000,
):
    """Average ``n_runs`` independently seeded runs into a RunSummary.

    The mean trace is computed point-wise. Per constant-R epoch, the
    first-crossing time is detected on the mean trace and the tightness
    value is the pooled 99th-percentile deviation magnitude of the per-run
    traces after the crossing; the overall tightness is the max over
    epochs.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    if rcp_enabled:
        _check_scenario_slater(config, table, scenario)
    trace, tail_rates, per_run, kernel = _simulate(
        config,
        table,
        scenario,
        horizon,
        master_seed,
        list(range(n_runs)),
        rcp_enabled=rcp_enabled,
        initial_rates=initial_rates,
        initial_backlog=initial_backlog,
        tail_window=tail_window,
    )
    epochs = _epoch_bounds(config, scenario, horizon)
    stats = (
        _epoch_stats(trace.sum_lambda, per_run, epochs, config.p_gen)
        if horizon
        else []
    )
    converged = bool(stats) and all(e.converged for e in stats)
    deltas = [e.delta for e in stats if e.converged]
    return RunSummary(
        trace=trace,
        epochs=stats,
        delta_tau=stats[0].delta_tau if stats else None,
        delta=max(deltas) if deltas else None,
        converged=converged,
        mean_tail_rates=tail_rates.mean(axis=0),
        tail_window=tail_window,
        n_runs=n_runs,
        master_seed=master_seed,
        horizon=horizon,
        final_sum_q=float(kernel.q.sum(axis=1).mean()) if horizon else 0.0,
    )


def sample_sessions(n_nodes, fraction, rng, x=1, lam_min=None, config=None):
    """Uniformly sample round(fraction * C(N, 2)) distinct node pairs.

    ``lam_min`` defaults to 0.1 * R * p_gen / |S| when a config is given.
    """
    if not 0 < fraction <= 1:
        raise ConfigError("fraction must be in (0, 1]")
    total = math.comb(n_nodes, 2)
    count = int(math.floor(fraction * total + 0.5))
    picks = np.sort(rng.choice(total, size=count, replace=False))
    pairs = []
    # lexicographic rank -> (i, j)
    offsets = np.cumsum([n_nodes - 1 - i for i in range(n_nodes - 1)])
    starts = np.concatenate([[0], offsets[:-1]])
    for rank in picks:
        i = int(np.searchsorted(offsets, rank, side="right"))
        j = i + 1 + int(rank - starts[i])
        pairs.append((i, j))
    if lam_min is None:
        if config is None:
            raise ConfigError("sample_sessions needs lam_min or a config for the default floor")
        lam_min = default_lam_min(config, count)
    return SessionTable(n_nodes, pairs, x=x, lam_min=lam_min)

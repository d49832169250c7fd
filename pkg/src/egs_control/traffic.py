"""Seeded stochastic demand arrivals and entanglement-success sampling.

Randomness is organized as counter-based (Philox) streams keyed by
``(master_seed, run_index, purpose)``. Identical keys always reproduce the
identical draw sequence, so ensemble runs are reproducible bit-for-bit and
may execute in any order. Each run owns three purpose streams: demand
arrivals, generation successes, and scheduler tie-breaking; every stream
consumes a fixed number of draws per slot, so sequences never shift with
simulation outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EgsError

__all__ = [
    "PURPOSE_SETUP",
    "PURPOSE_DEMAND",
    "PURPOSE_SUCCESS",
    "PURPOSE_SCHEDULER",
    "RngStream",
    "TrafficStreams",
    "DemandBatch",
    "draw_demands",
    "draw_successes",
    "draw_successes_vector",
]

PURPOSE_SETUP = 0
PURPOSE_DEMAND = 1
PURPOSE_SUCCESS = 2
PURPOSE_SCHEDULER = 3


class RngStream:
    """One seeded Philox stream tagged by (master_seed, run_index, purpose)."""

    def __init__(self, master_seed, run_index=0, purpose=PURPOSE_SETUP):
        self.master_seed = int(master_seed)
        self.run_index = int(run_index)
        self.purpose = int(purpose)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.run_index, self.purpose))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def binomial(self, n, p, size=None):
        return self.generator.binomial(n, p, size)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)

    def permutation(self, n):
        return self.generator.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.master_seed}, run={self.run_index}, purpose={self.purpose})"


class TrafficStreams:
    """Per-run bundle of the three purpose streams used by the engine.

    Uniform draws for demands and successes are served in blocks of ``block``
    slots to amortize generator calls; blocking does not change the values
    drawn, only how many are fetched per call.
    """

    def __init__(self, master_seed, run_index, n_sessions, x_max, block=256):
        self.n_sessions = int(n_sessions)
        self.x_max = int(x_max)
        self.block = int(block)
        self.demand = RngStream(master_seed, run_index, PURPOSE_DEMAND)
        self.success = RngStream(master_seed, run_index, PURPOSE_SUCCESS)
        self.scheduler = RngStream(master_seed, run_index, PURPOSE_SCHEDULER)
        self._demand_cache = None
        self._demand_pos = 0
        self._success_cache = None
        self._success_pos = 0
        self._tie_cache = None
        self._tie_pos = 0

    def demand_uniforms(self):
        """One uniform per session, consumed once per slot."""
        if self._demand_cache is None or self._demand_pos >= self.block:
            self._demand_cache = self.demand.random((self.block, self.n_sessions))
            self._demand_pos = 0
        row = self._demand_cache[self._demand_pos]
        self._demand_pos += 1
        return row

    def success_uniforms(self):
        """x_max uniforms per session per slot (one per potential resource)."""
        if self._success_cache is None or self._success_pos >= self.block:
            self._success_cache = self.success.random((self.block, self.n_sessions, self.x_max))
            self._success_pos = 0
        row = self._success_cache[self._success_pos]
        self._success_pos += 1
        return row

    def tie_uniforms(self):
        """One tie-breaking key per session per slot for the scheduler."""
        if self._tie_cache is None or self._tie_pos >= self.block:
            self._tie_cache = self.scheduler.random((self.block, self.n_sessions))
            self._tie_pos = 0
        row = self._tie_cache[self._tie_pos]
        self._tie_pos += 1
        return row


@dataclass(frozen=True)
class DemandBatch:
    """Per-session demand counts for one slot."""

    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))


def draw_demands(lam, streams):
    """Draw one slot of demand arrivals.

    Each count is floor(lam_s) plus a Bernoulli(lam_s - floor(lam_s)) draw,
    independent across sessions. ``streams`` may be a TrafficStreams bundle
    or a bare RngStream.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise EgsError("demand rates must be non-negative")
    base = np.floor(lam)
    if isinstance(streams, TrafficStreams):
        u = streams.demand_uniforms()
    else:
        u = streams.random(lam.shape)
    counts = base.astype(np.int64) + (u < (lam - base)).astype(np.int64)
    return DemandBatch(counts)


def draw_successes(m, p_gen, rng):
    """Number of successful entanglement generations out of m allocated resources."""
    if m < 0:
        raise EgsError("allocation must be non-negative")
    return int(rng.binomial(int(m), p_gen))


def draw_successes_vector(m, p_gen, streams):
    """Vectorized per-session success counts, Bin(m_s, p_gen).

    Uses the per-resource uniform block of ``streams``: session s consumes
    x_max uniforms and counts hits among the first m_s of them, which keeps
    consumption independent of the schedule.
    """
    m = np.asarray(m, dtype=np.int64)
    u = streams.success_uniforms()
    active = np.arange(streams.x_max)[None, :] < m[:, None]
    return ((u < p_gen) & active).sum(axis=1)

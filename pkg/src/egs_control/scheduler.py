"""Maximum weight resource scheduling with a brute-force reference oracle.

A schedule allocates the switch's R resources to sessions, subject to the
per-session cap min(q_s, x_s) and the budget sum(M) <= min(sum(q), R). The
max-weight schedule maximizes sum(q_s * M_s). Because the objective is
linear with separable box constraints plus a single budget, greedy
allocation in descending queue order is exact; equal queues are ordered by
a uniform random key so ties resolve uniformly at random.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EnumerationBoundError

__all__ = ["Schedule", "QueueVector", "max_weight_schedule", "brute_force_schedule", "greedy_alloc"]

# enumeration bound for the brute-force oracle
_MAX_SESSIONS = 10
_MAX_X = 4
_MAX_R = 8


@dataclass(frozen=True)
class Schedule:
    """Per-session resource allocations for one slot."""

    alloc: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alloc", np.asarray(self.alloc, dtype=np.int64))

    def objective(self, q):
        return int(np.dot(np.asarray(q, dtype=np.int64), self.alloc))


def QueueVector(q):
    """Validated per-session queue-length array."""
    q = np.asarray(q, dtype=np.int64)
    if np.any(q < 0):
        raise DimensionError("queue lengths must be non-negative")
    return q


def greedy_alloc(q, x, r, tie):
    """Greedy water-filling: allocate min(q_s, x_s) in descending q_s order.

    ``tie`` is a per-session key in [0, 1) used to order equal queue
    lengths; it is added to the integer queue length so it never reorders
    distinct lengths.
    """
    q = np.asarray(q, dtype=np.int64)
    cap = np.minimum(q, x)
    order = np.argsort(-(q + tie), kind="stable")
    cap_sorted = cap[order]
    cum = np.cumsum(cap_sorted)
    take = np.clip(np.minimum(cap_sorted, r - cum + cap_sorted), 0, None)
    alloc = np.empty_like(cap)
    alloc[order] = take
    return alloc


def max_weight_schedule(q, table, r, rng):
    """Select a maximum weight schedule for queue snapshot ``q``.

    ``rng`` supplies the tie-breaking keys; the returned schedule satisfies
    all feasibility constraints and attains the exact maximum of
    sum(q_s * M_s).
    """
    q = QueueVector(q)
    if q.shape != (len(table),):
        raise DimensionError(f"queue vector has {q.shape} components, expected {len(table)}")
    tie = rng.random(len(table))
    alloc = greedy_alloc(q, table.x, int(r), tie)
    return Schedule(alloc)


def brute_force_schedule(q, table, r):
    """Exhaustive reference oracle: maximum objective and all maximizers.

    Only valid for small instances (|S| <= 10, x_s <= 4, R <= 8).
    """
    q = QueueVector(q)
    n = len(table)
    if n > _MAX_SESSIONS or int(np.max(table.x, initial=0)) > _MAX_X or r > _MAX_R:
        raise EnumerationBoundError(
            f"instance above enumeration bound (|S|<={_MAX_SESSIONS}, x<={_MAX_X}, R<={_MAX_R})"
        )
    budget = min(int(q.sum()), int(r))
    best = -1
    maximizers = []
    ranges = [range(int(min(q[k], table.x[k])) + 1) for k in range(n)]
    for m in itertools.product(*ranges):
        if sum(m) > budget:
            continue
        obj = int(np.dot(q, m))
        if obj > best:
            best = obj
            maximizers = [m]
        elif obj == best:
            maximizers.append(m)
    return best, [Schedule(np.array(m, dtype=np.int64)) for m in maximizers]

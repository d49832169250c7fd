"""Experiment configs, presets, and file output for the CLI runner.

Presets reproduce the three published experiment families:

* ``fig2-n20 / fig2-n50 / fig2-n100`` -- convergence of the total demanded
  rate to R * p_gen for growing networks (R=3, p_gen=0.05, 10% of the
  possible sessions, step sizes 1/(40 * R * p_gen)).
* ``fig3`` -- robustness to live resource-count changes: a seeded
  reflecting random walk on {1..R} stepping every 10,000 slots, step sizes
  1/(10 * R * p_gen).
* ``fig4-uniform / fig4-tiered`` -- effect of node-cap profiles on the
  spread between the largest and smallest session rates.

Outputs per experiment directory: ``trace.csv`` (mean trace, columns
slot,sum_lambda,sum_q,max_rate,min_rate), ``summary.txt`` (key = value
lines), and ``manifest.json`` (the fully resolved config; re-running from
it reproduces the trace byte-for-byte).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import numopt
from .engine import ScenarioEvent, ensemble
from .errors import ConfigError
from .model import EgsConfig, SessionTable, default_lam_min, slater_check, total_service_rate
from .rcp import check_step_size_bound
from .traffic import PURPOSE_SETUP, RngStream

__all__ = [
    "ExperimentConfig",
    "preset",
    "PRESET_NAMES",
    "build_problem",
    "run_experiment",
    "read_summary",
    "read_trace",
]

PRESET_NAMES = ("fig2-n20", "fig2-n50", "fig2-n100", "fig3", "fig4-uniform", "fig4-tiered")

DEFAULT_SEED = 20401
_WALK_INTERVAL = 10000


@dataclass
class ExperimentConfig:
    """Fully describes one ensemble experiment.

    ``sessions``, ``node_caps``, and an event-list ``scenario`` may be given
    explicitly (as in an emitted manifest); otherwise they are derived
    deterministically from ``master_seed``.
    """

    name: str = "custom"
    n_nodes: int = 20
    n_resources: int = 3
    p_gen: float = 0.05
    session_fraction: float = 0.1
    sessions: list = None  # explicit [[i, j], ...] overrides sampling
    x_per_session: int = 1
    node_cap_profile: str = "uniform"  # uniform | three-tier | explicit
    node_caps: list = None
    lam_min: float = None  # None -> 0.1 * lambda_egs / |S|
    theta_c: float = None  # None -> 1 / (40 * lambda_egs)
    theta_u: float = None  # None -> theta_c
    utility: str = "log"
    horizon: int = 60000
    n_runs: int = 100
    master_seed: int = DEFAULT_SEED
    scenario: object = None  # None | "resource-walk" | [{at_slot, kind, value, node}]
    walk_interval: int = _WALK_INTERVAL
    tail_window: int = 10000
    initial_backlog: int = 0  # standing per-session demand backlog at slot 0
    override_step_bound: bool = False
    emit_oracle: bool = False

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)


def preset(name, n_nodes=None, **overrides):
    """A fully populated config for one of the built-in experiments."""
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    lam_egs = 3 * 0.05
    base = dict(
        name=name,
        n_resources=3,
        p_gen=0.05,
        session_fraction=0.1,
        x_per_session=1,
        theta_c=1.0 / (40 * lam_egs),
        horizon=60000,
        n_runs=100,
        # start each session with a small standing backlog so prices begin
        # high and the summed rate rises toward the service capacity instead
        # of slamming into the per-session caps while the queues are empty
        initial_backlog=4,
    )
    if name.startswith("fig2-n"):
        base["n_nodes"] = int(name.split("fig2-n")[1])
    elif name == "fig3":
        base["n_nodes"] = 50
        base["theta_c"] = 1.0 / (10 * lam_egs)
        base["scenario"] = "resource-walk"
    else:  # fig4-*
        base["n_nodes"] = 50
        base["node_cap_profile"] = "three-tier" if name.endswith("tiered") else "uniform"
    if n_nodes is not None:
        base["n_nodes"] = int(n_nodes)
    base.update(overrides)
    if name.startswith("fig4") and "theta_u" not in overrides:
        # Node-cap contrast experiments need a decisive node step: at half
        # the convergence ceiling, 1/(alpha_max * |S|), the gradient term
        # suppresses the node prices of slack caps entirely, so the uniform
        # profile behaves as if the node constraints were absent.
        n_sessions = int(
            math.floor(base["session_fraction"] * math.comb(base["n_nodes"], 2) + 0.5)
        )
        alpha_max = (base["x_per_session"] * base["p_gen"]) ** 2
        base["theta_u"] = 1.0 / (alpha_max * n_sessions)
    return ExperimentConfig(**base)


def _sample_pairs(n_nodes, fraction, gen):
    total = math.comb(n_nodes, 2)
    count = int(math.floor(fraction * total + 0.5))
    picks = np.sort(gen.choice(total, size=count, replace=False))
    # lexicographic rank -> (i, j) over ordered pairs with i < j
    offsets = np.cumsum([n_nodes - 1 - i for i in range(n_nodes - 1)])
    starts = np.concatenate([[0], offsets[:-1]])
    pairs = []
    for rank in picks:
        i = int(np.searchsorted(offsets, rank, side="right"))
        j = i + 1 + int(rank - starts[i])
        pairs.append([i, j])
    return pairs


def _resolve_node_caps(exp, n_sessions, gen):
    if exp.node_caps is not None:
        caps = list(exp.node_caps)
        if len(caps) != exp.n_nodes:
            raise ConfigError("node_caps length must equal n_nodes")
        return caps
    if exp.node_cap_profile == "uniform":
        return [((n_sessions - 1) / 2) * exp.p_gen] * exp.n_nodes
    if exp.node_cap_profile == "three-tier":
        # a random quarter of nodes at 1.5*p_gen, half at p_gen, a quarter at 0.5*p_gen
        order = gen.permutation(exp.n_nodes)
        quarter = exp.n_nodes // 4
        caps = np.full(exp.n_nodes, exp.p_gen)
        caps[order[:quarter]] = 1.5 * exp.p_gen
        caps[order[exp.n_nodes - quarter :]] = 0.5 * exp.p_gen
        return caps.tolist()
    raise ConfigError(f"unknown node_cap_profile {exp.node_cap_profile!r}")


def _resolve_scenario(exp, gen):
    if exp.scenario is None:
        return []
    if isinstance(exp.scenario, str):
        if exp.scenario != "resource-walk":
            raise ConfigError(f"unknown scenario preset {exp.scenario!r}")
        events = []
        r = exp.n_resources
        r_max = exp.n_resources
        for at in range(exp.walk_interval, exp.horizon, exp.walk_interval):
            if r == r_max:
                r -= 1
            elif r == 1:
                r += 1
            else:
                r += 1 if gen.random() < 0.5 else -1
            events.append({"at_slot": at, "kind": "resources", "value": r})
        return events
    return [dict(ev) for ev in exp.scenario]


def build_problem(exp):
    """Resolve an ExperimentConfig into (config, table, events, resolved copy).

    All sampled structure (sessions, tiered caps, the resource walk) comes
    from one setup stream keyed by the master seed, so the resolved copy is
    reproducible and is what the manifest records.
    """
    gen = RngStream(exp.master_seed, run_index=0, purpose=PURPOSE_SETUP)
    if exp.sessions is not None:
        pairs = [list(p) for p in exp.sessions]
    else:
        pairs = _sample_pairs(exp.n_nodes, exp.session_fraction, gen)
    n_sessions = len(pairs)
    caps = _resolve_node_caps(exp, n_sessions, gen)
    events = _resolve_scenario(exp, gen)

    probe = EgsConfig(
        n_nodes=exp.n_nodes,
        n_resources=exp.n_resources,
        p_gen=exp.p_gen,
        lam_node=np.asarray(caps, dtype=float),
        theta_c=exp.theta_c if exp.theta_c is not None else 1.0 / (40 * exp.n_resources * exp.p_gen),
        theta_u=exp.theta_u,
        utility=exp.utility,
        allow_step_override=exp.override_step_bound,
    )
    lam_min = exp.lam_min if exp.lam_min is not None else default_lam_min(probe, n_sessions)
    table = SessionTable(exp.n_nodes, pairs, x=exp.x_per_session, lam_min=lam_min)
    check_step_size_bound(probe, table)
    ok, violations = slater_check(table, probe)
    if not ok:
        raise ConfigError("strict feasibility fails: " + "; ".join(violations))

    resolved = exp.replace(
        sessions=pairs,
        node_caps=list(caps),
        node_cap_profile="explicit",
        lam_min=float(lam_min),
        theta_c=probe.theta_c,
        theta_u=float(probe.theta_u[0]),
        scenario=events,
    )
    scenario = [
        ScenarioEvent(
            at_slot=int(ev["at_slot"]),
            kind=ev["kind"],
            value=ev["value"],
            node=ev.get("node"),
        )
        for ev in events
    ]
    return probe, table, scenario, resolved


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if v is None:
        return "none"
    return str(v)


def write_summary(path, entries):
    with open(path, "w") as fh:
        for key, value in entries:
            fh.write(f"{key} = {_format_value(value)}\n")


def read_summary(path):
    """Parse a summary file back into a dict of strings/floats."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            key, _, value = line.partition(" = ")
            value = value.strip()
            if value == "none":
                out[key] = None
            elif value in ("true", "false"):
                out[key] = value == "true"
            else:
                try:
                    out[key] = float(value)
                except ValueError:
                    out[key] = value
    return out


def write_trace(path, trace):
    with open(path, "w") as fh:
        fh.write("slot,sum_lambda,sum_q,max_rate,min_rate\n")
        for k in range(len(trace)):
            fh.write(
                f"{int(trace.slot[k])},{trace.sum_lambda[k]:.17g},{trace.sum_q[k]:.17g},"
                f"{trace.max_rate[k]:.17g},{trace.min_rate[k]:.17g}\n"
            )


def read_trace(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data


def run_experiment(exp, out_dir):
    """Validate, run the ensemble, and write trace/summary/manifest files.

    Validation is total: a config failing the Slater condition or the
    step-size bound (without the override) never starts a run. Returns the
    RunSummary.
    """
    config, table, scenario, resolved = build_problem(exp)
    os.makedirs(out_dir, exist_ok=True)

    summary = ensemble(
        config,
        table,
        scenario=scenario,
        horizon=exp.horizon,
        n_runs=exp.n_runs,
        master_seed=exp.master_seed,
        initial_backlog=exp.initial_backlog,
        tail_window=exp.tail_window,
    )

    entries = [
        ("name", exp.name),
        ("n_nodes", exp.n_nodes),
        ("n_sessions", len(table)),
        ("n_resources", exp.n_resources),
        ("p_gen", exp.p_gen),
        ("lambda_egs", total_service_rate(exp.n_resources, exp.p_gen)),
        ("horizon", exp.horizon),
        ("n_runs", exp.n_runs),
        ("master_seed", exp.master_seed),
        ("converged", summary.converged),
        ("delta_tau", summary.delta_tau),
        ("delta", summary.delta),
        ("n_epochs", len(summary.epochs)),
    ]
    for k, ep in enumerate(summary.epochs):
        entries += [
            (f"epoch_{k}_start", ep.start),
            (f"epoch_{k}_end", ep.end),
            (f"epoch_{k}_resources", ep.n_resources),
            (f"epoch_{k}_lam_target", ep.lam_target),
            (f"epoch_{k}_delta_tau", ep.delta_tau),
            (f"epoch_{k}_delta", ep.delta),
            (f"epoch_{k}_converged", ep.converged),
        ]
    if exp.horizon:
        half = exp.horizon // 2
        gap = summary.trace.max_rate[half:] - summary.trace.min_rate[half:]
        entries.append(("mean_rate_gap", float(gap.mean())))
        entries.append(("mean_tail_sum_lambda", float(summary.trace.sum_lambda[-exp.tail_window:].mean())))

    if exp.emit_oracle:
        problem = numopt.NumProblem(table=table, config=config)
        solution = numopt.solve_dual(problem)
        entries += [
            ("oracle_lambda_hat", ",".join(f"{v:.17g}" for v in solution.lam)),
            ("oracle_p_c", float(solution.prices.p_c)),
            ("oracle_kkt_residual", solution.residual),
            ("oracle_iterations", solution.iterations),
        ]

    write_trace(os.path.join(out_dir, "trace.csv"), summary.trace)
    write_summary(os.path.join(out_dir, "summary.txt"), entries)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(resolved.to_dict(), fh, indent=2)
        fh.write("\n")
    return summary

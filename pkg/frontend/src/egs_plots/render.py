"""Build and save the three figure styles from parsed run outputs.

- ``fig2``: ensemble-mean total target rate vs. slot, with the service-rate
  reference as a horizontal dotted line and the convergence time as a
  vertical dashed marker.
- ``fig3``: the same trace for a run whose resource count changes mid-run;
  the reference is a stepped line tracking each epoch's target and every
  epoch gets its own convergence marker.
- ``fig4``: per-slot spread between the largest and smallest session rate on
  a log scale, with the run's time-averaged spread as a dotted reference.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import PlotsError
from .io import load_run

FIGURE_KINDS = ("fig2", "fig3", "fig4")

_MARKER_STYLE = dict(color="black", linestyle="--", linewidth=1.0)
_REFERENCE_STYLE = dict(color="tab:red", linestyle=":", linewidth=1.2)


def _require(summary, key):
    if key not in summary:
        raise PlotsError(f"summary is missing required key {key!r}")
    return summary[key]


def _title(outputs):
    return str(outputs.summary.get("name", "experiment"))


def _convergence_figure(outputs):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(outputs.trace["slot"], outputs.trace["sum_lambda"],
            color="tab:blue", linewidth=1.0, label="mean total target rate")
    lam_egs = _require(outputs.summary, "lambda_egs")
    ax.axhline(lam_egs, **_REFERENCE_STYLE, label="service rate")
    delta_tau = _require(outputs.summary, "delta_tau")
    if delta_tau is not None:
        ax.axvline(delta_tau, **_MARKER_STYLE, label="convergence time")
    ax.set_xlabel("slot")
    ax.set_ylabel("total target rate (pairs/slot)")
    ax.set_title(_title(outputs))
    ax.legend(loc="lower right")
    return fig


def _scenario_figure(outputs):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(outputs.trace["slot"], outputs.trace["sum_lambda"],
            color="tab:blue", linewidth=1.0, label="mean total target rate")
    epochs = outputs.epochs()
    if not epochs:
        raise PlotsError("summary describes no epochs; cannot draw the stepped reference")
    first = True
    for ep in epochs:
        ax.hlines(ep["lam_target"], ep["start"], ep["end"], **_REFERENCE_STYLE,
                  label="service rate" if first else None)
        if ep["delta_tau"] is not None:
            ax.axvline(ep["delta_tau"], **_MARKER_STYLE,
                       label="convergence time" if first else None)
        first = False
    ax.set_xlabel("slot")
    ax.set_ylabel("total target rate (pairs/slot)")
    ax.set_title(_title(outputs))
    ax.legend(loc="lower right")
    return fig


def _rate_gap_figure(outputs):
    fig, ax = plt.subplots(figsize=(7, 4))
    gap = outputs.trace["max_rate"] - outputs.trace["min_rate"]
    slot = outputs.trace["slot"]
    positive = gap > 0
    if positive.any():
        ax.plot(slot[positive], gap[positive],
                color="tab:blue", linewidth=1.0, label="max-min rate spread")
        ax.set_yscale("log")
    else:
        # a perfectly uniform run has zero spread everywhere; keep the axes
        # linear so the flat line is visible
        ax.plot(slot, gap, color="tab:blue", linewidth=1.0,
                label="max-min rate spread")
    mean_gap = outputs.summary.get("mean_rate_gap")
    if mean_gap is not None and mean_gap > 0:
        ax.axhline(mean_gap, **_REFERENCE_STYLE, label="time-averaged spread")
    ax.set_xlabel("slot")
    ax.set_ylabel("rate spread (pairs/slot)")
    ax.set_title(_title(outputs))
    ax.legend(loc="upper right")
    return fig


_BUILDERS = {
    "fig2": _convergence_figure,
    "fig3": _scenario_figure,
    "fig4": _rate_gap_figure,
}


def build_figure(kind, outputs):
    """Return a matplotlib Figure of the requested kind for parsed outputs."""
    if kind not in _BUILDERS:
        raise PlotsError(f"unknown figure kind {kind!r}; choose from {FIGURE_KINDS}")
    return _BUILDERS[kind](outputs)


def render(kind, in_dir, out_path):
    """Render one experiment directory to an image file.

    Inputs are validated before anything is written: on any parse or schema
    failure no output file is produced.
    """
    outputs = load_run(in_dir)
    fig = build_figure(kind, outputs)
    try:
        fig.savefig(out_path, dpi=150)
    finally:
        plt.close(fig)
    return out_path

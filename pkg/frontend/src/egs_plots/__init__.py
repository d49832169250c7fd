"""Render experiment output directories (trace.csv, summary.txt,
manifest.json) into the three standard figure styles.

This package talks to the simulator only through its files; it never
imports the simulation code.
"""

from .errors import PlotsError, SchemaError
from .io import RunOutputs, load_run, read_manifest, read_summary, read_trace
from .render import FIGURE_KINDS, build_figure, render

__all__ = [
    "FIGURE_KINDS",
    "PlotsError",
    "RunOutputs",
    "SchemaError",
    "build_figure",
    "load_run",
    "read_manifest",
    "read_summary",
    "read_trace",
    "render",
]

__version__ = "0.1.0"

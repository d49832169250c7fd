"""Readers for the experiment output files.

An experiment directory contains exactly three files:

- ``trace.csv``: headered comma-separated columns
  ``slot,sum_lambda,sum_q,max_rate,min_rate`` — the ensemble-mean
  per-slot trace;
- ``summary.txt``: one ``key = value`` pair per line (values are integers,
  floats, ``true``/``false``, ``none``, or bare strings);
- ``manifest.json``: the resolved experiment configuration.

All readers validate eagerly and raise :class:`SchemaError` naming the
offending column or key.
"""

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError

TRACE_COLUMNS = ("slot", "sum_lambda", "sum_q", "max_rate", "min_rate")


@dataclass(frozen=True)
class RunOutputs:
    """One experiment directory, fully parsed."""

    trace: dict  # column name -> numpy array
    summary: dict
    manifest: dict

    def epochs(self):
        """Per-epoch summary entries as a list of dicts with the
        ``epoch_<k>_`` prefix stripped."""
        n = int(self.summary.get("n_epochs", 0))
        out = []
        for k in range(n):
            prefix = f"epoch_{k}_"
            out.append(
                {
                    key[len(prefix):]: value
                    for key, value in self.summary.items()
                    if key.startswith(prefix)
                }
            )
        return out


def read_trace(path):
    """Parse a trace file into a dict of numpy arrays, one per column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header "
                              f"{','.join(TRACE_COLUMNS)}") from None
        if tuple(header) != TRACE_COLUMNS:
            missing = [c for c in TRACE_COLUMNS if c not in header]
            extra = [c for c in header if c not in TRACE_COLUMNS]
            detail = []
            if missing:
                detail.append(f"missing column(s) {missing}")
            if extra:
                detail.append(f"unexpected column(s) {extra}")
            if not detail:
                detail.append(f"column order must be {list(TRACE_COLUMNS)}")
            raise SchemaError(f"{path}: bad trace header: " + "; ".join(detail))
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: trace has a header but no data rows")
    data = np.asarray(rows, dtype=float)
    trace = {name: data[:, k] for k, name in enumerate(TRACE_COLUMNS)}
    slots = trace["slot"]
    if np.any(np.diff(slots) <= 0):
        bad = int(np.argmax(np.diff(slots) <= 0)) + 1
        raise SchemaError(f"{path}: column slot must be strictly increasing "
                          f"(violated at data row {bad + 1})")
    return trace


def _parse_value(text):
    if text == "true":
        return True
    if text == "false":
        return False
    if text == "none":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_summary(path):
    """Parse a ``key = value`` summary file into a dict."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if " = " not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split(" = ", 1)
            out[key] = _parse_value(value)
    return out


def read_manifest(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None


def load_run(in_dir):
    """Load the three output files of one experiment directory."""
    paths = {name: os.path.join(in_dir, name)
             for name in ("trace.csv", "summary.txt", "manifest.json")}
    for name, p in paths.items():
        if not os.path.exists(p):
            raise SchemaError(f"{in_dir}: missing {name}")
    return RunOutputs(
        trace=read_trace(paths["trace.csv"]),
        summary=read_summary(paths["summary.txt"]),
        manifest=read_manifest(paths["manifest.json"]),
    )

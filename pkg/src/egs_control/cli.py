"""Command-line experiment runner.

Subcommands:

* ``run``   -- execute an ensemble experiment from a preset or a config
  file, writing trace.csv, summary.txt, and manifest.json to the output
  directory.
* ``solve`` -- solve the static rate-allocation problem for the same
  configuration and emit the optimum as JSON.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import numopt
from .errors import EgsError
from .experiments import ExperimentConfig, PRESET_NAMES, build_problem, preset, run_experiment


def _load_experiment(args):
    if args.config:
        with open(args.config) as fh:
            exp = ExperimentConfig.from_dict(json.load(fh))
    elif args.preset:
        exp = preset(args.preset, n_nodes=args.nodes)
    else:
        raise EgsError("either --preset or --config is required")
    if args.preset and args.config:
        raise EgsError("--preset and --config are mutually exclusive")
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.runs is not None:
        overrides["n_runs"] = args.runs
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if args.override_step_bound:
        overrides["override_step_bound"] = True
    if getattr(args, "emit_oracle", False):
        overrides["emit_oracle"] = True
    return exp.replace(**overrides) if overrides else exp


def _add_common(parser):
    parser.add_argument("--preset", choices=PRESET_NAMES, help="built-in experiment")
    parser.add_argument("--config", help="path to a config/manifest JSON file")
    parser.add_argument("--nodes", type=int, default=None, help="override the preset node count")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--runs", type=int, default=None, help="ensemble size")
    parser.add_argument("--horizon", type=int, default=None, help="slots per run")
    parser.add_argument(
        "--override-step-bound",
        action="store_true",
        help="run even if the step sizes violate the convergence bound",
    )


def main(argv=None):
    parser = argparse.ArgumentParser(prog="egs-ctl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an ensemble experiment")
    _add_common(p_run)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument(
        "--emit-oracle",
        action="store_true",
        help="also solve the static optimum and add it to the summary",
    )

    p_solve = sub.add_parser("solve", help="solve the static optimum only")
    _add_common(p_solve)
    p_solve.add_argument("--out", default=None, help="write JSON here instead of stdout")

    args = parser.parse_args(argv)
    try:
        exp = _load_experiment(args)
        if args.command == "run":
            summary = run_experiment(exp, args.out)
            status = "converged" if summary.converged else "not-converged"
            print(
                f"{exp.name}: {status}, delta_tau={summary.delta_tau},"
                f" delta={summary.delta}, outputs in {args.out}"
            )
        else:
            config, table, _, _ = build_problem(exp)
            solution = numopt.solve_dual(numopt.NumProblem(table=table, config=config))
            payload = {
                "lambda_hat": solution.lam.tolist(),
                "p_c": solution.prices.p_c,
                "p_u": solution.prices.p_u.tolist(),
                "iterations": solution.iterations,
                "kkt_residual": solution.residual,
                "sessions": [list(s.members()) for s in table.sessions],
            }
            text = json.dumps(payload, indent=2)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            else:
                print(text)
    except EgsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

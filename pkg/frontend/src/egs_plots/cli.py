"""Command-line entry point: render an experiment directory to an image."""

import argparse
import sys

from .errors import PlotsError
from .render import FIGURE_KINDS, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render an experiment output directory "
                    "(trace.csv, summary.txt, manifest.json) to an image.",
    )
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS,
                        help="figure style to draw")
    parser.add_argument("--in", dest="in_dir", required=True, metavar="DIR",
                        help="experiment output directory")
    parser.add_argument("--out", required=True, metavar="FILE",
                        help="image file to write (format from extension)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        render(args.kind, args.in_dir, args.out)
    except (PlotsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

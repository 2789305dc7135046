"""Batch entry point: adl-figures --in <run dir> --out <image dir> [--figs a,b]."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from adl_figures.figures import FIGURES, FigureDataError, FigureSpec, render


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="adl-figures",
        description="Render the standard chart set from an adl-lab run directory.",
    )
    parser.add_argument("--in", dest="in_dir", required=True, help="run directory")
    parser.add_argument("--out", required=True, help="image output directory")
    parser.add_argument(
        "--figs",
        default=None,
        help=f"comma-separated subset of {sorted(FIGURES)}; default is all",
    )
    args = parser.parse_args(argv)
    selection: tuple[str, ...] = ()
    if args.figs:
        selection = tuple(s.strip() for s in args.figs.split(",") if s.strip())
    try:
        report = render(FigureSpec(in_dir=args.in_dir, out_dir=args.out, figures=selection))
    except (FigureDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, reason in sorted(report.skipped.items()):
        print(f"skipped {name}: {reason}", file=sys.stderr)
    for name, reason in sorted(report.failed.items()):
        print(f"failed {name}: {reason}", file=sys.stderr)
    for path in report.written:
        print(path)
    if report.failed and not report.written:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

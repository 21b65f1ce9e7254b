"""Command-line entry point: stap-plots --bundle DIR [--out DIR] [--figures a,b]."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURES, PlotBundle, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stap-plots", description=__doc__)
    parser.add_argument("--bundle", required=True,
                        help="directory with summarize/subsample output CSVs")
    parser.add_argument("--out", default=None,
                        help="image output directory (default: bundle/figures)")
    parser.add_argument("--figures", default=",".join(FIGURES),
                        help=f"comma list from: {', '.join(FIGURES)}")
    args = parser.parse_args(argv)
    out = args.out if args.out else f"{args.bundle}/figures"
    figures = tuple(f.strip() for f in args.figures.split(",") if f.strip())
    try:
        bundle = PlotBundle(bundle_dir=args.bundle, out_dir=out, figures=figures)
        written = render(bundle)
    except SchemaError as exc:
        print(f"stap-plots: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"stap-plots: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

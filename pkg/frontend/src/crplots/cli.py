"""Entry point for the `plot` script: plot <figure-kind> <csv> <out>."""
import argparse
import sys

from .figures import FIGURE_KINDS, MissingColumnError, render, spec_for


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="plot",
        description="Render a benchmark figure from a harness CSV.",
    )
    ap.add_argument("kind", choices=FIGURE_KINDS, help="figure kind")
    ap.add_argument("csv", help="input CSV produced by the crchain CLI")
    ap.add_argument("out", help="output image path (.svg, .pdf or .png)")
    ap.add_argument("--title", default=None)
    args = ap.parse_args(argv)

    try:
        path = render(spec_for(args.kind, args.csv, args.out, title=args.title))
    except (MissingColumnError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

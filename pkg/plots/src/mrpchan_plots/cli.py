"""Entry points: plot-density and plot-contour."""

from __future__ import annotations

import argparse
import json
import sys

from .figures import FigureInputError, FigureSpec, plot_contour, plot_density


def _parser(kind: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=f"plot-{kind}")
    p.add_argument("--in", dest="inputs", action="append", required=True, help="input CSV (repeatable for density)")
    p.add_argument("--out", required=True, help="output image path (SVG by default)")
    p.add_argument("--title", default=None)
    p.add_argument("--xlabel", default=None)
    p.add_argument("--ylabel", default=None)
    return p


def _run(kind: str, argv) -> int:
    args = _parser(kind).parse_args(argv)
    spec = FigureSpec(
        inputs=tuple(args.inputs),
        kind=kind,
        output=args.out,
        title=args.title,
        xlabel=args.xlabel,
        ylabel=args.ylabel,
    )
    try:
        result = plot_density(spec) if kind == "density" else plot_contour(spec)
    except (FigureInputError, OSError) as e:
        json.dump({"error": {"type": type(e).__name__, "message": str(e)}}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    json.dump(result, sys.stdout)
    sys.stdout.write("\n")
    return 0


def main_density(argv=None) -> int:
    return _run("density", argv)


def main_contour(argv=None) -> int:
    return _run("contour", argv)


if __name__ == "__main__":
    sys.exit(main_density())

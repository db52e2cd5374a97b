"""plot: render one figure from a result CSV."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot", description=__doc__)
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input_csv", required=True, metavar="CSV")
    parser.add_argument("--out", dest="output_image", required=True, metavar="IMAGE")
    parser.add_argument("--title", default="")
    args = parser.parse_args(argv)
    try:
        result = render(PlotSpec(args.kind, args.input_csv, args.output_image, title=args.title))
    except SchemaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {args.output_image} ({result.width_px}x{result.height_px}, {len(result.series)} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

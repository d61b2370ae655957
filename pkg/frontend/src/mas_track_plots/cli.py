"""plot_trace: render panels from a trace CSV.

    plot_trace trace.csv --panels positions,velocities --out figs/ --format png
"""

from __future__ import annotations

import argparse
import sys

from .panels import PANELS, PanelError, PlotRequest, render


def cli(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot_trace",
        description="Render tracking/estimation panels from an exported trace CSV.",
    )
    parser.add_argument("trace_csv", help="trace CSV produced by the simulator")
    parser.add_argument("--panels", required=True,
                        help="comma-separated subset of: " + ", ".join(PANELS)
                             + " (empty string renders nothing)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--format", default="png", choices=("png", "svg", "pdf"),
                        help="image format (default png)")
    args = parser.parse_args(argv)

    panels = tuple(p for p in args.panels.split(",") if p)
    try:
        produced = render(PlotRequest(trace_csv_path=args.trace_csv, panels=panels,
                                      out_dir=args.out, image_format=args.format))
    except (PanelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in produced:
        print(path)
    print(f"{len(produced)} panel(s) rendered")
    return 0


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()

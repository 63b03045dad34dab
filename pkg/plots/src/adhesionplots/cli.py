"""Command line entry point: render figures from a study directory."""

import argparse
import sys

from .figures import render_study
from .tables import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adhesionlab-plots",
        description="Render figures from adhesionlab study output.")
    sub = parser.add_subparsers(dest="command", required=True)
    render = sub.add_parser("render", help="render all figures for a study")
    render.add_argument("--in", dest="in_dir", required=True,
                        help="study directory (holds manifest.json)")
    render.add_argument("--out", dest="out_dir", required=True,
                        help="directory for the rendered images")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = render_study(args.in_dir, args.out_dir)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if summary.get("notice"):
        print(summary["notice"])
        return 0
    slope = summary["slope"]
    slope_txt = f"{slope:.3f}" if slope is not None else "n/a"
    print(f"rendered {len(summary['images'])} image(s) for "
          f"{summary['runs']} run(s); fitted error slope {slope_txt}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

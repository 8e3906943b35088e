"""Command-line entry point: ``bodyexport export --spec <json>``."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, ExportSpec, export_frames
from .model import ModelError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bodyexport")
    sub = parser.add_subparsers(dest="command", required=True)
    exp = sub.add_parser("export", help="export body frames from a sequence")
    exp.add_argument("--spec", required=True, help="export spec JSON")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        spec = ExportSpec.load(args.spec)
        index = export_frames(spec)
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ExportError, ModelError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    sys.stderr.write(f"exported {len(index['frames'])} frames\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""figplots command line: render figures, validate CSVs.

    figplots render --spec spec.json
    figplots validate --csv file.csv [--csv file2.csv ...]

Render exits nonzero on schema mismatches or missing inputs; validate
always exits 0 and prints the violation report (machine-readable JSON).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .csvread import SchemaError, validate_csv
from .render import PlotSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="figplots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render")
    p_render.add_argument("--spec", required=True)
    p_val = sub.add_parser("validate")
    p_val.add_argument("--csv", action="append", required=True)
    args = parser.parse_args(argv)

    if args.command == "render":
        try:
            spec = PlotSpec.from_json(args.spec)
            for path in spec.inputs:
                if not os.path.exists(path):
                    raise SchemaError(f"input {path} does not exist")
            out = render(spec)
        except (SchemaError, OSError, json.JSONDecodeError, TypeError) as e:
            sys.stderr.write(json.dumps(
                {"error": type(e).__name__, "message": str(e)}) + "\n")
            return 1
        print(json.dumps({"status": "ok", "output": out}))
        return 0

    reports = [validate_csv(p) for p in args.csv]
    print(json.dumps([
        {"path": r.path, "schema": r.schema, "violations": r.violations}
        for r in reports
    ], indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""rct-plots: render figure specs against rctsynth experiment outputs."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .figures import load_runs, render, spec_from_json


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rct-plots",
                                     description="publication-style figures from experiment CSV output")
    parser.add_argument("--runs", required=True, help="runs.csv from rct-synth run")
    parser.add_argument("--summary", help="summary.csv (accepted for interface completeness)")
    parser.add_argument("--figures", required=True, help="JSON list of figure specs")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    with open(args.figures, encoding="utf-8") as fh:
        specs = [spec_from_json(obj) for obj in json.load(fh)]
    inputs = {"runs": load_runs(args.runs)}
    out_dir = Path(args.out)
    for spec in specs:
        rows = inputs["runs"] if spec.input == "runs" else load_runs(spec.input)
        path = render(spec, rows, out_dir)
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

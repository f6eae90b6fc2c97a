#!/usr/bin/env python3
"""Render the standard figure set from an experiment output directory.

Requires the plots package (pip install -e ./plots). Writes one figure per
kind per scenario found in runs.csv."""

import argparse
import csv
from pathlib import Path

from rctplots.figures import FigureSpec, load_runs, render


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--results", default="results/desk_scale")
    parser.add_argument("--out", default="results/desk_scale/figures")
    args = parser.parse_args()

    rows = load_runs(Path(args.results) / "runs.csv")
    scenarios = sorted({r["scenario"] for r in rows})
    for sid in scenarios:
        specs = [
            FigureSpec("metric_box", f"{sid}_ks_univariate.svg", scenario=sid,
                       metric="univariate:", variant="observed",
                       title=f"{sid}: univariate similarity (observed)"),
            FigureSpec("pca_scatter", f"{sid}_pca.svg", scenario=sid, variant="complete"),
            FigureSpec("or_strip", f"{sid}_or.svg", scenario=sid, variant="complete"),
            FigureSpec("miss_prop", f"{sid}_missingness.svg", scenario=sid),
        ]
        for spec in specs:
            try:
                print("wrote", render(spec, rows, args.out))
            except Exception as e:  # CC-only runs have no missingness rows, etc.
                print(f"skipped {spec.output}: {e}")


if __name__ == "__main__":
    main()

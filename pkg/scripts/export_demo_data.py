#!/usr/bin/env python3
"""Write the built-in demo trial table (and its schema) to disk, so the CLI
can be exercised against concrete files."""

import argparse
import json
from pathlib import Path

from rctsynth.demo import make_demo_table, trial_schema
from rctsynth.table import schema_to_json, write_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/demo_trial.csv")
    parser.add_argument("--schema-out", default="data/trial_schema.json")
    parser.add_argument("--rows", type=int, default=1342)
    args = parser.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table = make_demo_table(n=args.rows)
    write_csv(table, out)
    with open(args.schema_out, "w", encoding="utf-8") as fh:
        json.dump(schema_to_json(trial_schema()), fh, indent=2)
    print(f"wrote {table.n_rows} rows -> {out}")
    print(f"wrote schema -> {args.schema_out}")


if __name__ == "__main__":
    main()

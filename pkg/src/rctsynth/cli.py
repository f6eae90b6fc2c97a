"""Command-line entry points: run experiments, export a single synthetic
dataset, dump the scenario registry."""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import frameworks, harness
from .missingness import impose
from .scenarios import registry_to_json
from .table import write_csv


def _add_run(sub):
    p = sub.add_parser("run", help="run a full simulation experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--runs", type=int, help="override number of runs")
    p.add_argument("--workers", type=int, help="override worker count")
    p.add_argument("--seed", type=int, help="override master seed")
    p.add_argument("--scenarios", help="comma-separated scenario ids")
    p.add_argument("--frameworks", help="comma-separated framework kinds")


def _add_generate(sub):
    p = sub.add_parser("generate", help="export one synthetic dataset as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--framework", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--scenario", help="impose this scenario first (complete input data only)")
    p.add_argument("--complete", action="store_true",
                   help="export the complete synthetic table, no synthetic missingness")


def _add_scenarios(sub):
    p = sub.add_parser("scenarios", help="scenario registry utilities")
    p.add_argument("action", choices=["export"])
    p.add_argument("--out", required=True)


def cmd_run(args) -> int:
    config = harness.ExperimentConfig.from_json(args.config)
    if args.runs is not None:
        config.runs = args.runs
    if args.workers is not None:
        config.workers = args.workers
    if args.seed is not None:
        config.seed = args.seed
    if args.scenarios:
        config.scenarios = args.scenarios.split(",")
    if args.frameworks:
        config.frameworks = args.frameworks.split(",")
    t0 = time.perf_counter()
    records, summary = harness.run_experiment(config)
    paths = harness.emit(records, summary, args.out, config)
    n_fail = sum(summary.failures.values())
    print(f"{len(records)} run records in {time.perf_counter() - t0:.1f}s "
          f"({n_fail} failures) -> {paths['runs'].parent}")
    return 0


def cmd_generate(args) -> int:
    config = harness.ExperimentConfig.from_json(args.config)
    table = harness.load_dataset(config)
    rng = np.random.default_rng(args.seed)
    if args.scenario:
        scens = {s.id: s for s in harness.resolve_scenarios(config, table)}
        if args.scenario in scens:
            scenario = scens[args.scenario]
        else:
            from .scenarios import get_scenario

            scenario = get_scenario(args.scenario)
        real = impose(table, scenario, rng.spawn(1)[0])
    else:
        real = table
    gen_config = config.generation_config()
    if args.complete:
        gen_config.generate_missingness = False
    out = frameworks.generate(args.framework, real, gen_config, rng.spawn(1)[0])
    result = out.with_missingness if (out.with_missingness is not None and not args.complete) else out.complete
    write_csv(result, args.out, config.missing_token)
    print(f"wrote {result.n_rows} synthetic rows -> {args.out}")
    return 0


def cmd_scenarios(args) -> int:
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(registry_to_json(), fh, indent=2)
    print(f"wrote scenario registry -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rct-synth",
                                     description="synthetic RCT data generation with missing-data frameworks")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_generate(sub)
    _add_scenarios(sub)
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "generate":
        return cmd_generate(args)
    return cmd_scenarios(args)


if __name__ == "__main__":
    sys.exit(main())

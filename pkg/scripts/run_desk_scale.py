#!/usr/bin/env python3
"""Desk-scale experiment: 100 seeded replications of scenarios 1A and 1B over
every compatible framework, full metric suite, results under results/.

Point --dataset at a real trial export to run against it instead of the
built-in demo table (add --calibrate to re-solve the registry intercepts for
that data)."""

import argparse
import time

from rctsynth.harness import ExperimentConfig, emit, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset", default=None, help="CSV on the canonical schema (default: demo table)")
    parser.add_argument("--out", default="results/desk_scale")
    parser.add_argument("--runs", type=int, default=100)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=20250801)
    parser.add_argument("--scenarios", default="1A,1B")
    parser.add_argument("--calibrate", action="store_true",
                        help="re-solve scenario intercepts against the dataset")
    parser.add_argument("--fast", action="store_true",
                        help="skip the ML-efficacy classifiers (the slowest metric family)")
    args = parser.parse_args()

    config = ExperimentConfig(
        dataset=args.dataset,
        scenarios=args.scenarios.split(","),
        frameworks=["cc_all", "cc_by", "ipw_ind", "ipw_force", "ipw_mono", "mi"],
        runs=args.runs,
        workers=args.workers,
        seed=args.seed,
        calibrate=args.calibrate,
        metrics={"ml_efficacy": not args.fast},
    )
    t0 = time.perf_counter()
    records, summary = run_experiment(config)
    paths = emit(records, summary, args.out, config)
    minutes = (time.perf_counter() - t0) / 60
    n_fail = sum(summary.failures.values())
    print(f"{len(records)} records in {minutes:.1f} min, {n_fail} failures")
    for (sid, kind), secs in sorted(summary.total_time.items()):
        print(f"  {sid} {kind:24s} {secs:8.1f}s total")
    print(f"outputs: {sorted(p.name for p in paths.values())} in {paths['runs'].parent}")


if __name__ == "__main__":
    main()

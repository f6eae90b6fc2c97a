"""Experiment orchestration: N seeded replications of (impose -> generate per
framework -> metrics), parallelized over a process pool, with aggregation and
machine-readable outputs.

Every task's rng derives from (master seed, scenario id, run index, framework
name), never from scheduling order, so results are identical for any worker
count and any subset or ordering of scenarios and frameworks. One run's
failure is recorded and the experiment keeps going.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, frameworks, regression
from .metrics import MetricReport, MetricToggles, compute_report
from .missingness import ScenarioSpec, impose, validate_scenario
from .scenarios import calibrated_scenario, get_scenario, registry_hash, scenario_from_json
from .table import DataTable, load_csv, load_schema, schema_from_json
from .demo import make_demo_table, trial_schema


@dataclass
class ExperimentConfig:
    dataset: str | None = None  # CSV path; None runs the built-in demo table
    schema: list[dict] | None = None
    schema_file: str | None = None
    missing_token: str = "NA"
    scenarios: list = field(default_factory=lambda: ["1A", "1B"])
    frameworks: list[str] = field(default_factory=lambda: ["cc_all", "cc_by", "ipw_ind", "ipw_force", "mi"])
    runs: int = 100
    workers: int = 1
    seed: int = 20250801
    fixed_mask: bool = False  # draw one mask per scenario instead of one per run
    calibrate: bool = False  # re-solve registry intercepts against this dataset
    baseline_arm: str = "0"
    thresholds: dict[str, float] = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    mi: dict = field(default_factory=dict)
    force_mono_drop_z2: bool = False
    generate_missingness: bool = True

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def validate(self) -> None:
        if self.runs < 1 or self.workers < 1:
            raise ValueError("runs and workers must be >= 1")
        for f in self.frameworks:
            frameworks.resolve_kind(f)

    def toggles(self) -> MetricToggles:
        t = MetricToggles()
        m = dict(self.metrics)
        for key in ("univariate", "bivariate", "pca", "ml_efficacy", "inference"):
            if key in m:
                setattr(t, key, bool(m[key]))
        if "classifiers" in m:
            t.classifiers = tuple(m["classifiers"])
        return t

    def generation_config(self) -> frameworks.GenerationConfig:
        return frameworks.GenerationConfig(
            thresholds=dict(self.thresholds),
            generate_missingness=self.generate_missingness,
            force_mono_uses_later_stage=not self.force_mono_drop_z2,
            mi_sweeps=int(self.mi.get("sweeps", 10)),
            mi_donors=int(self.mi.get("donors", 5)),
        )


def load_dataset(config: ExperimentConfig) -> DataTable:
    if config.dataset is None:
        return make_demo_table()
    if config.schema is not None:
        schema = schema_from_json(config.schema)
    elif config.schema_file is not None:
        schema = load_schema(config.schema_file)
    else:
        schema = trial_schema()
    return load_csv(config.dataset, schema, config.missing_token)


def resolve_scenarios(config: ExperimentConfig, table: DataTable) -> list[ScenarioSpec]:
    """Resolve ids/inline specs and validate them against the table's schema;
    a malformed scenario aborts here, before any run executes."""
    out = []
    for item in config.scenarios:
        s = get_scenario(item) if isinstance(item, str) else scenario_from_json(item)
        if config.calibrate:
            s = calibrated_scenario(s, table)
        validate_scenario(s, table)
        out.append(s)
    return out


def compatible_frameworks(kinds: list[str], scenario: ScenarioSpec) -> list[str]:
    """Frameworks applicable to one scenario's missingness pattern."""
    out = []
    for k in kinds:
        k = frameworks.resolve_kind(k)
        if scenario.pattern == "monotone" and k in ("ipw_indicator", "ipw_force_monotonicity"):
            continue
        if scenario.pattern == "non_monotone" and k == "ipw_monotone":
            continue
        out.append(k)
    return out


@dataclass
class RunRecord:
    scenario: str
    framework: str
    run: int
    seed: int
    metrics: MetricReport | None
    diagnostics: dict[str, float | int | str]
    duration: float
    error: str | None = None


@dataclass
class AggregateSummary:
    stats: list[dict]
    coverage: list[dict]
    total_time: dict[tuple[str, str], float]
    failures: dict[tuple[str, str], int]


def _digest(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


def _task_seed(master: int, scenario_id: str, run: int, label: str = "") -> np.random.SeedSequence:
    key = (_digest(scenario_id), run) if not label else (_digest(scenario_id), run, _digest(label))
    return np.random.SeedSequence(entropy=master, spawn_key=key)


# worker globals, installed once per process by the pool initializer
_CTX: dict = {}


def _init_worker(table, scenario_list, config):
    _CTX["table"] = table
    _CTX["scenarios"] = {s.id: s for s in scenario_list}
    _CTX["config"] = config


def run_task(args: tuple[str, int]) -> list[RunRecord]:
    """One (scenario, run): impose a fresh mask, run every compatible
    framework, score it, capture failures per framework."""
    sid, run = args
    table: DataTable = _CTX["table"]
    scenario: ScenarioSpec = _CTX["scenarios"][sid]
    config: ExperimentConfig = _CTX["config"]
    gen_config = config.generation_config()
    toggles = config.toggles()

    mask_run = 0 if config.fixed_mask else run
    impose_rng = np.random.default_rng(_task_seed(config.seed, sid, mask_run, "impose"))
    kinds = compatible_frameworks(config.frameworks, scenario)
    try:
        imposed = impose(table, scenario, impose_rng)
    except Exception as e:  # an imposition failure fails every framework of the run
        return [
            RunRecord(sid, kind, run, 0, None, {"failure": f"{type(e).__name__}: {e}"}, 0.0, error=str(e))
            for kind in kinds
        ]

    records = []
    for kind in kinds:
        seed_seq = _task_seed(config.seed, sid, run, kind)
        seed_id = int(seed_seq.generate_state(1)[0])
        gen_rng = np.random.default_rng(_task_seed(config.seed, sid, run, kind + "/gen"))
        met_rng = np.random.default_rng(_task_seed(config.seed, sid, run, kind + "/metrics"))
        t0 = time.perf_counter()
        try:
            output = frameworks.generate(kind, imposed, gen_config, gen_rng)
            report = compute_report(imposed, output, met_rng, baseline_arm=config.baseline_arm, toggles=toggles)
            diag = _flatten_diagnostics(output.diagnostics)
            records.append(RunRecord(sid, kind, run, seed_id, report, diag, time.perf_counter() - t0))
        except Exception as e:  # record-and-continue failure policy
            diag = {"failure": f"{type(e).__name__}: {e}"}
            if isinstance(e, frameworks.StageError) and isinstance(e.cause, regression.EmptyAdmissibleSetError):
                diag["empty_admissible"] = e.cause.count
            records.append(
                RunRecord(sid, kind, run, seed_id, None, diag, time.perf_counter() - t0, error=str(e))
            )
    return records


def _flatten_diagnostics(d: frameworks.Diagnostics) -> dict:
    out: dict[str, float | int | str] = {}
    for sf in d.stage_fits:
        out[f"n_fit:{sf.stage}"] = sf.n_fit
        if sf.max_weight is not None:
            out[f"max_weight:{sf.stage}"] = sf.max_weight
        if sf.separated:
            out[f"separated:{sf.stage}"] = 1
    out["max_weight"] = d.max_weight()
    if d.m_used is not None:
        out["m_used"] = d.m_used
    if d.protocol_events:
        out["protocol_rows"] = d.n_protocol_rows()
    if d.empty_admissible:
        out["empty_admissible"] = d.empty_admissible
    return out


def metric_rows(r: RunRecord) -> list[tuple[str, str, float]]:
    """Flatten one record's MetricReport into (metric_name, variant, value)."""
    if r.metrics is None:
        return []
    rows = []
    rep = r.metrics
    for variant, scores in rep.univariate.items():
        for var, v in scores.items():
            rows.append((f"univariate:{var}", variant, v))
    for metric, scores in rep.bivariate.items():
        for pair, v in scores.items():
            rows.append((f"{metric}:{pair}", "observed", v))
    for variant, d in rep.pca.items():
        rows.append(("pca_evr1", variant, d["synth"][0]))
        rows.append(("pca_evr2", variant, d["synth"][1]))
        rows.append(("pca_evr1_real", variant, d["real"][0]))
        rows.append(("pca_evr2_real", variant, d["real"][1]))
    for clf, d in rep.efficacy.items():
        for m, v in d.items():
            rows.append((f"efficacy_{clf}:{m}", rep.efficacy_tables, v))
    for variant, d in rep.inference.items():
        for key, out_name in (("or", "or"), ("lo", "or_lo"), ("hi", "or_hi"),
                              ("real_or", "or_real"), ("real_lo", "or_real_lo"), ("real_hi", "or_real_hi")):
            rows.append((out_name, variant, d[key]))
    for var, d in rep.missingness.items():
        rows.append((f"miss_prop:{var}", "synthetic", d["synthetic"]))
        rows.append((f"miss_prop:{var}", "real", d["real"]))
    return rows


def run_experiment(config: ExperimentConfig) -> tuple[list[RunRecord], AggregateSummary]:
    config.validate()
    table = load_dataset(config)
    scens = resolve_scenarios(config, table)
    tasks = [(s.id, run) for s in scens for run in range(config.runs)]
    if config.workers == 1:
        _init_worker(table, scens, config)
        chunks = [run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(
            max_workers=config.workers, initializer=_init_worker, initargs=(table, scens, config)
        ) as pool:
            chunks = list(pool.map(run_task, tasks, chunksize=4))
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.scenario, r.framework, r.run))
    return records, aggregate(records)


def aggregate(records: list[RunRecord]) -> AggregateSummary:
    """Summary statistics per (scenario, framework, metric); failed runs are
    excluded from statistics and counted separately."""
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[tuple, list[float]] = {}
    overlap: dict[tuple, list[bool]] = {}
    total_time: dict[tuple[str, str], float] = {}
    failures: dict[tuple[str, str], int] = {}
    for r in records:
        key_tf = (r.scenario, r.framework)
        total_time[key_tf] = total_time.get(key_tf, 0.0) + r.duration
        if r.error is not None:
            failures[key_tf] = failures.get(key_tf, 0) + 1
            continue
        for name, variant, value in metric_rows(r):
            groups.setdefault((r.scenario, r.framework, name, variant), []).append(value)
        for variant, d in r.metrics.inference.items():
            hit = d["lo"] <= d["real_hi"] and d["real_lo"] <= d["hi"]
            overlap.setdefault((r.scenario, r.framework, variant), []).append(hit)
    stats = []
    for (sid, fw, name, variant), values in sorted(groups.items()):
        v = np.asarray(values)
        q = np.quantile(v, (0.025, 0.25, 0.5, 0.75, 0.975))
        stats.append(
            {
                "scenario": sid, "framework": fw, "metric_name": name, "variant": variant,
                "n": len(v), "mean": float(v.mean()),
                "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
                "q2.5": float(q[0]), "q25": float(q[1]), "q50": float(q[2]),
                "q75": float(q[3]), "q97.5": float(q[4]),
            }
        )
    coverage = [
        {"scenario": sid, "framework": fw, "variant": variant, "coverage": float(np.mean(hits))}
        for (sid, fw, variant), hits in sorted(overlap.items())
    ]
    return AggregateSummary(stats, coverage, total_time, failures)


def emit(records: list[RunRecord], summary: AggregateSummary, out_dir: str | Path,
         config: ExperimentConfig | None = None) -> dict[str, Path]:
    """Write runs.csv, summary.csv, diagnostics.csv, timings.csv and
    experiment.json; runs.csv carries no timestamps so identical experiments
    are byte-identical."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    runs_path = out / "runs.csv"
    with open(runs_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "framework", "run", "seed", "metric_name", "variant", "value"])
        for r in records:
            for name, variant, value in metric_rows(r):
                w.writerow([r.scenario, r.framework, r.run, r.seed, name, variant, repr(float(value))])
    paths["runs"] = runs_path

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        cols = ["scenario", "framework", "metric_name", "variant", "n", "mean", "sd",
                "q2.5", "q25", "q50", "q75", "q97.5"]
        w.writerow(cols)
        for row in summary.stats:
            w.writerow([row[c] if not isinstance(row[c], float) else repr(row[c]) for c in cols])
        for row in summary.coverage:
            w.writerow([row["scenario"], row["framework"], "or_coverage", row["variant"],
                        "", repr(row["coverage"]), "", "", "", "", "", ""])
    paths["summary"] = summary_path

    diag_path = out / "diagnostics.csv"
    with open(diag_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "framework", "run", "key", "value"])
        for r in records:
            for key, value in r.diagnostics.items():
                w.writerow([r.scenario, r.framework, r.run, key, value])
            if r.error is not None:
                w.writerow([r.scenario, r.framework, r.run, "failure", r.error])
    paths["diagnostics"] = diag_path

    timings_path = out / "timings.csv"
    with open(timings_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "framework", "run", "seconds"])
        for r in records:
            w.writerow([r.scenario, r.framework, r.run, repr(r.duration)])
        w.writerow([])
        w.writerow(["scenario", "framework", "total_seconds", ""])
        for (sid, fw), secs in sorted(summary.total_time.items()):
            w.writerow([sid, fw, repr(secs), ""])
    paths["timings"] = timings_path

    meta = {
        "config": config.to_dict() if config else None,
        "registry_hash": registry_hash(),
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "failures": {f"{k[0]}/{k[1]}": v for k, v in summary.failures.items()},
    }
    meta_path = out / "experiment.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    paths["experiment"] = meta_path
    return paths

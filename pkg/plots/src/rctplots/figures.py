"""Figure kinds: metric box plots, PCA explained-variance scatters, odds-ratio
CI strips, and missingness-proportion panels.

Rendering is a pure function of (input rows, figure spec): matplotlib runs
with a pinned style, a fixed svg hash salt, and no timestamps, so repeated
renders of the same inputs are byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("svg")
matplotlib.rcParams["svg.hashsalt"] = "rct-plots"
matplotlib.rcParams["figure.dpi"] = 100

from matplotlib.figure import Figure  # noqa: E402

FIGURE_KINDS = ("metric_box", "pca_scatter", "or_strip", "miss_prop")
RUNS_COLUMNS = {"scenario", "framework", "run", "seed", "metric_name", "variant", "value"}

# fixed palette so framework colors are stable across figures
PALETTE = ("#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377")

FRAMEWORK_LABELS = {
    "cc_all_stage": "CC: All Stage",
    "cc_by_stage": "CC: By Stage",
    "ipw_indicator": "IPW: Indicator",
    "ipw_force_monotonicity": "IPW: Force Mono",
    "ipw_monotone": "IPW",
    "mi": "MI",
}


class FigureError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    output: str
    input: str = "runs"  # logical name resolved by the CLI, or a file path
    scenario: str | None = None
    framework: str | None = None
    metric: str | None = None  # exact metric_name or a "prefix:" match
    variant: str | None = None
    format: str = "svg"
    title: str | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise FigureError(f"unknown figure kind {self.kind!r}; known: {FIGURE_KINDS}")
        if self.format not in ("svg", "png"):
            raise FigureError(f"unknown format {self.format!r}")


def spec_from_json(obj: dict) -> FigureSpec:
    known = {f for f in FigureSpec.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise FigureError(f"unknown figure spec keys: {sorted(unknown)}")
    return FigureSpec(**obj)


def load_runs(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not RUNS_COLUMNS <= set(rows[0]):
        raise FigureError(f"{path} does not look like a runs.csv (columns {sorted(RUNS_COLUMNS)})")
    for r in rows:
        r["value"] = float(r["value"])
        r["run"] = int(r["run"])
    return rows


def _filter(rows: list[dict], spec: FigureSpec, metric: str | None = None) -> list[dict]:
    out = []
    want_metric = metric if metric is not None else spec.metric
    for r in rows:
        if spec.scenario and r["scenario"] != spec.scenario:
            continue
        if spec.framework and r["framework"] != spec.framework:
            continue
        if spec.variant and r["variant"] != spec.variant:
            continue
        if want_metric:
            name = r["metric_name"]
            if want_metric.endswith(":"):
                if not name.startswith(want_metric):
                    continue
            elif name != want_metric:
                continue
        out.append(r)
    return out


def _frameworks_in(rows: list[dict]) -> list[str]:
    return sorted({r["framework"] for r in rows})


def _require(rows: list[dict], spec: FigureSpec, what: str) -> list[dict]:
    if not rows:
        raise FigureError(f"{spec.kind}: no rows matched {what}; refusing to render a blank figure")
    return rows


def _new_figure(n_panels: int = 1, width: float = 2.8):
    fig = Figure(figsize=(max(4.0, width * n_panels), 3.4))
    axes = fig.subplots(1, n_panels, squeeze=False)[0]
    return fig, axes


def _save(fig: Figure, spec: FigureSpec, out_dir: Path) -> Path:
    out = out_dir / spec.output
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format=spec.format, metadata={"Date": None} if spec.format == "svg" else None)
    return out


def _metric_box(rows, spec: FigureSpec, out_dir: Path) -> Path:
    data = _require(_filter(rows, spec), spec, f"metric={spec.metric} variant={spec.variant}")
    kinds = _frameworks_in(data)
    groups = [[r["value"] for r in data if r["framework"] == k] for k in kinds]
    fig, (ax,) = _new_figure(1, width=1.3 * max(len(kinds), 3))
    box = ax.boxplot(groups, tick_labels=[FRAMEWORK_LABELS.get(k, k) for k in kinds],
                     patch_artist=True, widths=0.6)
    for patch, k in zip(box["boxes"], kinds):
        patch.set_facecolor(PALETTE[kinds.index(k) % len(PALETTE)])
        patch.set_alpha(0.7)
    ax.set_ylabel("similarity score")
    ax.set_title(spec.title or f"{spec.metric or 'metric'} ({spec.variant or 'all variants'})")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    return _save(fig, spec, out_dir)


def _pivot_by_run(rows, metric):
    return {(r["framework"], r["run"]): r["value"] for r in rows if r["metric_name"] == metric}


def _pca_scatter(rows, spec: FigureSpec, out_dir: Path) -> Path:
    data = [r for r in _filter(rows, spec, metric="") if r["metric_name"].startswith("pca_")]
    _require(data, spec, "pca rows")
    kinds = _frameworks_in(data)
    e1 = _pivot_by_run(data, "pca_evr1")
    e2 = _pivot_by_run(data, "pca_evr2")
    r1 = _pivot_by_run(data, "pca_evr1_real")
    r2 = _pivot_by_run(data, "pca_evr2_real")
    fig, axes = _new_figure(len(kinds))
    for ax, kind in zip(axes, kinds):
        runs = sorted({run for (k, run) in e1 if k == kind})
        xs = [e1[(kind, run)] for run in runs]
        ys = [e2[(kind, run)] for run in runs]
        ax.scatter(xs, ys, s=18, color=PALETTE[kinds.index(kind) % len(PALETTE)], label="synthetic")
        rx = np.mean([r1[(kind, run)] for run in runs])
        ry = np.mean([r2[(kind, run)] for run in runs])
        ax.scatter([rx], [ry], marker="*", s=140, color="black", zorder=5, label="real")
        ax.set_title(FRAMEWORK_LABELS.get(kind, kind), fontsize=9)
        ax.set_xlabel("PC1 variance fraction", fontsize=8)
    axes[0].set_ylabel("PC2 variance fraction", fontsize=8)
    axes[-1].legend(fontsize=7, loc="best")
    fig.suptitle(spec.title or f"PCA explained variance ({spec.variant or 'complete'})", fontsize=10)
    fig.tight_layout()
    return _save(fig, spec, out_dir)


def _or_strip(rows, spec: FigureSpec, out_dir: Path) -> Path:
    data = _require(_filter(rows, spec, metric="or"), spec, "odds-ratio rows")
    names = ("or", "or_lo", "or_hi", "or_real", "or_real_lo", "or_real_hi")
    series = {name: _pivot_by_run(_filter(rows, spec, metric=name), name) for name in names}
    kinds = _frameworks_in(data)
    fig, axes = _new_figure(len(kinds))
    for ax, kind in zip(axes, kinds):
        runs = sorted({run for (k, run) in series["or"] if k == kind})
        if not runs:
            raise FigureError(f"or_strip: no runs for framework {kind}")
        real_lo = np.mean([series["or_real_lo"][(kind, r)] for r in runs])
        real_hi = np.mean([series["or_real_hi"][(kind, r)] for r in runs])
        real_or = np.mean([series["or_real"][(kind, r)] for r in runs])
        # the real-data CI band sits behind the per-run synthetic CIs
        ax.axvspan(real_lo, real_hi, color="#9467bd", alpha=0.25, zorder=0)
        ax.axvline(real_or, color="#9467bd", lw=1.2, zorder=1)
        color = PALETTE[kinds.index(kind) % len(PALETTE)]
        for i, run in enumerate(runs):
            lo = series["or_lo"][(kind, run)]
            hi = series["or_hi"][(kind, run)]
            ax.plot([lo, hi], [i, i], color=color, lw=1.4, zorder=2)
            ax.plot([series["or"][(kind, run)]], [i], marker="o", ms=2.5, color="black", zorder=3)
        ax.set_title(FRAMEWORK_LABELS.get(kind, kind), fontsize=9)
        ax.set_xlabel("odds ratio", fontsize=8)
        ax.set_yticks([])
    axes[0].set_ylabel("simulation run", fontsize=8)
    fig.suptitle(spec.title or f"treatment odds ratio ({spec.variant or 'complete'})", fontsize=10)
    fig.tight_layout()
    return _save(fig, spec, out_dir)


def _miss_prop(rows, spec: FigureSpec, out_dir: Path) -> Path:
    data = _require(_filter(rows, spec, metric="miss_prop:"), spec, "missingness rows")
    variables = sorted({r["metric_name"].split(":", 1)[1] for r in data})
    synth = [r for r in data if r["variant"] == "synthetic"]
    kinds = _frameworks_in(synth)
    if not kinds:
        raise FigureError("miss_prop: no synthetic-proportion rows")
    fig, (ax,) = _new_figure(1, width=1.5 * max(len(kinds), 3))
    width = 0.8 / len(variables)
    for vi, var in enumerate(variables):
        groups, positions = [], []
        for ki, kind in enumerate(kinds):
            vals = [r["value"] for r in synth if r["framework"] == kind
                    and r["metric_name"] == f"miss_prop:{var}"]
            if vals:
                groups.append(vals)
                positions.append(ki + (vi - (len(variables) - 1) / 2) * width)
        box = ax.boxplot(groups, positions=positions, widths=width * 0.85, patch_artist=True)
        for patch in box["boxes"]:
            patch.set_facecolor(PALETTE[vi % len(PALETTE)])
            patch.set_alpha(0.7)
        real_vals = [r["value"] for r in data if r["variant"] == "real"
                     and r["metric_name"] == f"miss_prop:{var}"]
        ax.axhline(np.mean(real_vals), color=PALETTE[vi % len(PALETTE)], ls="--", lw=1.2,
                   label=f"{var} (real)")
    ax.set_xticks(range(len(kinds)))
    ax.set_xticklabels([FRAMEWORK_LABELS.get(k, k) for k in kinds], rotation=20)
    ax.set_ylabel("missing proportion")
    ax.legend(fontsize=7)
    ax.set_title(spec.title or "synthetic missingness proportions")
    fig.tight_layout()
    return _save(fig, spec, out_dir)


_RENDERERS = {
    "metric_box": _metric_box,
    "pca_scatter": _pca_scatter,
    "or_strip": _or_strip,
    "miss_prop": _miss_prop,
}


def render(spec: FigureSpec, rows: list[dict], out_dir: str | Path = ".") -> Path:
    """Render one figure spec against parsed runs.csv rows."""
    return _RENDERERS[spec.kind](rows, spec, Path(out_dir))

"""Impose known MCAR/MAR missingness, calibrate it, fit missingness models,
and draw synthetic observed-indicators.

Imposition evaluates logistic observation models on the complete table (the
mechanism is allowed to see the truth by construction); fitting never is, so
its standardization moments come from the observed subsample only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from . import regression
from .table import DataTable, is_monotone

PATTERNS = ("non_monotone", "monotone")
MECHANISMS = ("MCAR", "MAR")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class MissingnessModelSpec:
    """Logistic model for one observed-indicator R, on the standardized scale."""

    target: str
    covariates: tuple[regression.Term, ...]
    coefficients: dict[str, float]  # expanded term name -> coefficient, plus "intercept"
    standardize: tuple[str, ...] = ()

    def slope_names(self) -> list[str]:
        return [k for k in self.coefficients if k != "intercept"]


@dataclass(frozen=True)
class McarSpec:
    """Observed-indicator drawn Bernoulli(p_observed), independent of the data."""

    target: str
    p_observed: float


ModelSpec = MissingnessModelSpec | McarSpec


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    pattern: str
    mechanism: str
    proportion: float
    strength: str
    models: tuple[ModelSpec, ...]

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ScenarioError(f"unknown pattern {self.pattern!r}")
        if self.mechanism not in MECHANISMS:
            raise ScenarioError(f"unknown mechanism {self.mechanism!r}")
        if not 0 < self.proportion < 1:
            raise ScenarioError("proportion must be in (0, 1)")

    def targets(self) -> list[str]:
        return [m.target for m in self.models]


def validate_scenario(s: ScenarioSpec, t: DataTable) -> None:
    """Check the scenario is well-posed for this table's schema."""
    temporal = t.temporal_names()
    targets = s.targets()
    for m in s.models:
        if m.target not in temporal:
            raise ScenarioError(f"{s.id}: target {m.target!r} is not post-randomization or outcome")
    if targets != sorted(targets, key=temporal.index):
        raise ScenarioError(f"{s.id}: models must be listed in temporal order")
    if s.pattern == "monotone":
        if targets != temporal:
            raise ScenarioError(f"{s.id}: monotone scenarios must model every stage ({temporal})")
    for m in s.models:
        if isinstance(m, McarSpec):
            if not 0 < m.p_observed < 1:
                raise ScenarioError(f"{s.id}: MCAR p must be in (0, 1)")
            continue
        expanded = _expanded_names(t, m.covariates)
        for name in m.slope_names():
            if name not in expanded:
                raise ScenarioError(f"{s.id}: coefficient {name!r} matches no covariate term")
        if s.pattern == "non_monotone":
            # a model may not condition on an earlier modeled (hence missing) variable
            earlier = targets[: targets.index(m.target)]
            for col in _columns_of(m.covariates):
                if col in earlier:
                    raise ScenarioError(
                        f"{s.id}: model for {m.target!r} uses {col!r}, which has imposed missingness"
                    )


def _columns_of(covariates) -> list[str]:
    out = []
    for term in covariates:
        if isinstance(term, tuple):
            out.extend(term)
        else:
            out.append(term)
    return out


def _expanded_names(t: DataTable, covariates) -> list[str]:
    names = []
    for term in covariates:
        if isinstance(term, tuple):
            names.append(regression.term_name(term))
            continue
        c = t.col_schema(term)
        if c.kind == "categorical":
            names.extend(regression.term_name(term, lv) for lv in c.levels[1:])
        else:
            names.append(term)
    return names


def _standard_moments(t: DataTable, names: tuple[str, ...], rows: np.ndarray | None = None):
    moments = {}
    for name in names:
        vals = t.columns[name] if rows is None else t.columns[name][rows]
        vals = vals[~np.isnan(vals)]
        moments[name] = (float(np.mean(vals)), float(np.std(vals, ddof=1)))
    return moments


def linear_predictor(
    t: DataTable,
    model: MissingnessModelSpec,
    moments: dict[str, tuple[float, float]] | None = None,
) -> np.ndarray:
    """Intercept + slopes on (optionally standardized) covariates.

    Omitted dummy coefficients count as zero, matching registry tables that
    list only some levels.
    """
    if moments is None:
        moments = _standard_moments(t, model.standardize)
    lp = np.full(t.n_rows, model.coefficients.get("intercept", 0.0))
    for term in model.covariates:
        if isinstance(term, tuple):
            coef = model.coefficients.get(regression.term_name(term), 0.0)
            if coef:
                lp = lp + coef * t.columns[term[0]] * t.columns[term[1]]
            continue
        c = t.col_schema(term)
        if c.kind == "categorical":
            codes = t.columns[term]
            for k, lv in enumerate(c.levels[1:], start=1):
                coef = model.coefficients.get(regression.term_name(term, lv), 0.0)
                if coef:
                    lp = lp + coef * (codes == k)
        else:
            coef = model.coefficients.get(term, 0.0)
            if coef:
                vals = t.columns[term]
                if term in model.standardize:
                    mu, sd = moments[term]
                    vals = (vals - mu) / sd
                lp = lp + coef * vals
    return lp


@dataclass(frozen=True)
class ImposedTable:
    table: DataTable  # masked
    truth: DataTable  # the complete table the mask was drawn on
    scenario: ScenarioSpec
    realized_proportions: dict[str, float]

    @property
    def pattern(self) -> str:
        return self.scenario.pattern


def impose(t: DataTable, s: ScenarioSpec, rng: np.random.Generator) -> ImposedTable:
    """Draw observed-indicators per the scenario and hide the zero cells.

    Cell values are untouched; only masks change. Monotone scenarios propagate
    missingness downstream after the per-variable draws.
    """
    if not t.all_observed():
        raise ScenarioError("imposition needs a fully observed table")
    validate_scenario(s, t)
    moments = {}
    std_names = set()
    for m in s.models:
        if isinstance(m, MissingnessModelSpec):
            std_names.update(m.standardize)
    moments = _standard_moments(t, tuple(std_names))
    masks = {}
    for m in s.models:
        if isinstance(m, McarSpec):
            p = np.full(t.n_rows, m.p_observed)
        else:
            p = expit(linear_predictor(t, m, moments))
        masks[m.target] = regression.draw_bernoulli(p, rng).astype(bool)
    if s.pattern == "monotone":
        alive = np.ones(t.n_rows, dtype=bool)
        for name in t.temporal_names():
            if name in masks:
                masks[name] &= alive
                alive = masks[name]
    masked = t.with_masks(masks)
    realized = {name: float(np.mean(~masked.mask[name])) for name in masks}
    if s.pattern == "monotone":
        assert is_monotone(masked)
    return ImposedTable(masked, t, s, realized)


def calibrate_intercept(
    t: DataTable,
    model: MissingnessModelSpec,
    target_observed: float,
    bracket: tuple[float, float] = (-50.0, 50.0),
    tol: float = 1e-6,
) -> float:
    """Bisect for the intercept making the mean observation probability hit
    the target; the mean is monotone in the intercept."""
    if not 0 < target_observed < 1:
        raise ScenarioError("target_observed must be in (0, 1)")
    slopes = MissingnessModelSpec(
        model.target,
        model.covariates,
        {k: v for k, v in model.coefficients.items() if k != "intercept"},
        model.standardize,
    )
    lp0 = linear_predictor(t, slopes)

    def mean_obs(c: float) -> float:
        return float(np.mean(expit(c + lp0)))

    lo, hi = bracket
    if not mean_obs(lo) <= target_observed <= mean_obs(hi):
        raise ScenarioError(f"target {target_observed} unreachable within intercept bracket {bracket}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_obs(mid) < target_observed:
            lo = mid
        else:
            hi = mid
        if abs(mean_obs(mid) - target_observed) <= tol:
            return mid
    return 0.5 * (lo + hi)


def indicator_column(t: DataTable, target: str) -> np.ndarray:
    """R indicator of a column: 1 observed, 0 missing (always computable)."""
    return t.mask[target].astype(np.float64)


def fit_missingness_model(
    t: DataTable,
    design: regression.DesignSpec,
    fit_rows: np.ndarray | None = None,
    standardize: tuple[str, ...] = (),
    drop_absent_levels: bool = False,
) -> regression.FittedRegression:
    """Logistic fit of a target's observed-indicator on design covariates.

    `design.response` names the *target column*; the regression response is
    its indicator. Standardization moments come from the fitting subsample.
    """
    rows = np.arange(t.n_rows) if fit_rows is None else np.asarray(fit_rows)
    if rows.dtype == bool:
        rows = np.flatnonzero(rows)
    r_name = f"r_{design.response}"
    aug = t.with_column(r_name, indicator_column(t, design.response))
    sub = aug.take(rows)
    if standardize:
        moments = _standard_moments(sub, tuple(standardize))
        for name in standardize:
            mu, sd = moments[name]
            sub = sub.replace_column(name, (sub.columns[name] - mu) / sd)
    fit_design = regression.DesignSpec(r_name, design.covariates, design.intercept)
    return regression.fit_logistic(sub, fit_design, drop_absent_levels=drop_absent_levels)


# probability model for one synthetic observed-indicator: maps the synthetic
# table plus indicators drawn so far to per-row observation probabilities
ProbModel = Callable[[DataTable, dict[str, np.ndarray]], np.ndarray]


def generate_synthetic_missingness(
    models: list[tuple[str, ProbModel]],
    synthetic: DataTable,
    pattern: str,
    rng: np.random.Generator,
    forced_zero: dict[str, np.ndarray] | None = None,
) -> tuple[DataTable, dict[str, np.ndarray]]:
    """Draw synthetic observed-indicators in temporal order and mask the zeros.

    Rows flagged via `forced_zero` get observation probability 0 (rare-strata
    protocol). Monotone patterns propagate: once a row goes missing it stays
    missing downstream. Returns the masked table and the drawn indicators.
    """
    if pattern not in PATTERNS:
        raise ScenarioError(f"unknown pattern {pattern!r}")
    n = synthetic.n_rows
    drawn: dict[str, np.ndarray] = {}
    alive = np.ones(n, dtype=bool)
    masks = {}
    for target, prob_fn in models:
        forced = forced_zero.get(target) if forced_zero else None
        if forced is not None and forced.any():
            # protocol rows carry masked synthetic cells, so the model is
            # evaluated on the surviving rows only (flags are cumulative, so
            # their upstream stage columns are all observed)
            ok = np.flatnonzero(~forced)
            drawn_ok = {k: v[ok] for k, v in drawn.items()}
            p = np.zeros(n)
            p[ok] = np.asarray(prob_fn(synthetic.take(ok), drawn_ok), dtype=np.float64)
        else:
            p = np.asarray(prob_fn(synthetic, drawn), dtype=np.float64)
        r = regression.draw_bernoulli(np.clip(p, 0.0, 1.0), rng)
        if pattern == "monotone":
            r = r * alive
            alive = r.astype(bool)
        drawn[target] = r
        masks[target] = r.astype(bool)
    return synthetic.with_masks(masks), drawn

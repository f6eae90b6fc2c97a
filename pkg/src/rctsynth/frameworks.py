"""The sequential generation frameworks.

Every framework walks the same pipeline -- baseline copula, treatment draw,
one regression per follow-up variable, a logistic outcome draw -- and they
differ only in which real rows feed each fit, how those rows are weighted,
and how synthetic observed-indicators are produced afterwards. A fully
observed input collapses all of them onto the same unweighted fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import regression
from .baseline import TreatmentDistribution, fit_copula, sample_copula, sample_treatment
from .mice import mice_impute
from .missingness import ImposedTable, generate_synthetic_missingness
from .regression import DesignSpec, draw_bernoulli, predict, sample_admissible, unseen_level_rows
from .table import DataTable, complete_cases, is_monotone, observed_subset

KINDS = (
    "cc_all_stage",
    "cc_by_stage",
    "ipw_indicator",
    "ipw_force_monotonicity",
    "ipw_monotone",
    "mi",
)

ALIASES = {
    "cc_all": "cc_all_stage",
    "cc_by": "cc_by_stage",
    "ipw_ind": "ipw_indicator",
    "ipw_force": "ipw_force_monotonicity",
    "ipw_mono": "ipw_monotone",
}


class FrameworkError(RuntimeError):
    pass


class StageError(FrameworkError):
    def __init__(self, kind: str, stage: str, cause: Exception):
        self.kind = kind
        self.stage = stage
        self.cause = cause
        super().__init__(f"{kind} failed at stage {stage!r}: {cause}")


@dataclass
class GenerationConfig:
    thresholds: dict[str, float] = field(default_factory=dict)  # admissibility floor per follow-up variable
    treatment_probs: tuple[float, ...] | None = None  # default: equal probabilities
    generate_missingness: bool = True
    force_mono_uses_later_stage: bool = True  # condition the forced R_Z1 model on Z2
    rare_strata_protocol: bool = True
    mi_sweeps: int = 10
    mi_donors: int = 5
    mi_min_m: int = 2

    def threshold(self, name: str) -> float:
        return self.thresholds.get(name, 0.0)


@dataclass
class StageFit:
    stage: str
    n_fit: int
    weighted: bool
    max_weight: float | None = None
    min_p: float | None = None
    dropped_levels: tuple = ()
    separated: bool = False


@dataclass
class Diagnostics:
    stage_fits: list[StageFit] = field(default_factory=list)
    protocol_events: list[dict] = field(default_factory=list)
    m_used: int | None = None
    empty_admissible: int = 0
    notes: list[str] = field(default_factory=list)

    def max_weight(self) -> float:
        weights = [s.max_weight for s in self.stage_fits if s.max_weight is not None]
        return max(weights) if weights else 1.0

    def n_protocol_rows(self) -> int:
        return sum(e["n_rows"] for e in self.protocol_events)

    def fit_sizes(self) -> dict[str, int]:
        return {s.stage: s.n_fit for s in self.stage_fits}


@dataclass
class GenerationOutput:
    kind: str
    complete: DataTable
    with_missingness: DataTable | None
    diagnostics: Diagnostics


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _stage_designs(t: DataTable) -> list[tuple[str, DesignSpec, str]]:
    """(variable, generative design, link) per follow-up stage, in trial order."""
    base = tuple(t.baseline_names()) + (t.treatment_name(),)
    out = []
    seen: tuple[str, ...] = ()
    for name in t.post_randomization_names():
        out.append((name, DesignSpec(name, base + seen), "identity"))
        seen = seen + (name,)
    y = t.outcome_name()
    out.append((y, DesignSpec(y, base + seen), "logit"))
    return out


class _Builder:
    """Accumulates the synthetic table stage by stage, tracking rows hit by
    the rare-strata protocol (synthetic strata a stage fit never saw)."""

    def __init__(self, kind: str, real: DataTable, config: GenerationConfig, n: int):
        self.kind = kind
        self.real = real
        self.config = config
        self.n = n
        self.syn: DataTable | None = None
        self.flagged = np.zeros(n, dtype=bool)
        self.flagged_from: dict[str, np.ndarray] = {}  # stage -> rows flagged at or before it
        self.diag = Diagnostics()

    def start(self, baseline_fit: DataTable, rng_base, rng_treat) -> None:
        copula = fit_copula(baseline_fit)
        self.diag.stage_fits.append(StageFit("baseline", baseline_fit.n_rows, weighted=False))
        syn = sample_copula(copula, self.n, rng_base)
        tname = self.real.treatment_name()
        tcol = self.real.col_schema(tname)
        levels = tcol.levels if tcol.kind == "categorical" else ("0", "1")
        probs = self.config.treatment_probs or tuple(1.0 / len(levels) for _ in levels)
        dist = TreatmentDistribution(levels, probs)
        draws = sample_treatment(dist, self.n, rng_treat)
        self.syn = syn.with_column(tname, draws, kind=tcol.kind, role="treatment", levels=tcol.levels)

    def flag_unseen(self, stage: str, model: regression.FittedRegression) -> None:
        """Protocol entry point: rows whose strata the fit never saw go
        missing from this stage onward."""
        new = unseen_level_rows(model, self.syn) & ~self.flagged
        if new.any():
            if not self.config.rare_strata_protocol:
                raise regression.UnseenLevelError("<design>", [], np.flatnonzero(new))
            cols = sorted(model.seen_levels)
            self.diag.protocol_events.append(
                {"stage": stage, "columns": cols, "n_rows": int(new.sum())}
            )
            self.flagged |= new
        self.flagged_from[stage] = self.flagged.copy()

    def record_fit(self, stage: str, model: regression.FittedRegression, p_fit: np.ndarray | None = None):
        weighted = p_fit is not None
        sf = StageFit(stage, model.n_fit, weighted,
                      dropped_levels=model.dropped_levels, separated=model.separated)
        if weighted:
            p_fit = np.maximum(p_fit, 1e-12)
            sf.min_p = float(np.min(p_fit))
            sf.max_weight = float(np.max(1.0 / p_fit))
        self.diag.stage_fits.append(sf)
        self.flag_unseen(stage, model)

    def predict_ok(self, model: regression.FittedRegression) -> tuple[np.ndarray, np.ndarray]:
        """Predict over rows not hit by the protocol; returns (rows, values)."""
        ok = np.flatnonzero(~self.flagged)
        if len(ok) == 0:
            raise FrameworkError("every synthetic row was flagged by the rare-strata protocol")
        return ok, predict(model, self.syn.take(ok))

    def add_stage_column(self, name: str, values_ok: np.ndarray, ok_rows: np.ndarray) -> None:
        col = self.real.col_schema(name)
        values = np.full(self.n, np.nan)
        values[ok_rows] = values_ok
        observed = np.zeros(self.n, dtype=bool)
        observed[ok_rows] = True
        self.syn = self.syn.with_column(
            name, values, kind=col.kind, role=col.role, levels=col.levels, index=col.index, mask=observed
        )

    def gen_continuous(self, name: str, model: regression.FittedRegression, rng,
                       residuals: np.ndarray | None = None) -> None:
        ok, pred = self.predict_ok(model)
        pool = model.residuals if residuals is None else residuals
        vals = sample_admissible(pred, pool, self.config.threshold(name), rng)
        self.add_stage_column(name, vals, ok)

    def gen_outcome(self, name: str, model: regression.FittedRegression, rng) -> None:
        ok, p = self.predict_ok(model)
        self.add_stage_column(name, draw_bernoulli(p, rng), ok)

    def forced_zero(self, stages: list[str]) -> dict[str, np.ndarray]:
        """Per-target forced-missing rows for synthetic indicator draws."""
        return {s: self.flagged_from.get(s, self.flagged) for s in stages}

    def output(self, with_missingness: DataTable | None) -> GenerationOutput:
        return GenerationOutput(self.kind, self.syn, with_missingness, self.diag)


def mix_rows(candidates: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per row, sample uniformly one of the m candidate vectors (m x n)."""
    m, n = candidates.shape
    choice = rng.integers(0, m, size=n)
    return candidates[choice, np.arange(n)]


def _fit_indicator(t: DataTable, target: str, design_covs: tuple, rows: np.ndarray | None = None) -> regression.FittedRegression:
    """Logistic fit of target's observed-indicator on covariates, over `rows`.

    Runs with on_separation="saturate": strong mechanisms are nearly
    deterministic, so these fits separate routinely and only their fitted
    probabilities are consumed downstream.
    """
    base = t
    r_name = f"r_{target}"
    if r_name not in base.columns:
        base = base.with_column(r_name, base.mask[target].astype(np.float64))
    sub = base if rows is None else base.take(rows)
    return regression.fit_logistic(
        sub, DesignSpec(r_name, tuple(design_covs)), drop_absent_levels=True, on_separation="saturate"
    )


def _aug_with_indicator(t: DataTable, target: str) -> DataTable:
    """Real table plus r_<target> and <target>_filled (0 where unobserved);
    the filled copy exists so interaction terms never touch masked cells."""
    r = t.mask[target].astype(np.float64)
    filled = np.where(t.mask[target], t.columns[target], 0.0)
    kind = t.col_schema(target).kind
    return (
        t.with_column(f"r_{target}", r)
        .with_column(f"{target}_filled", filled, kind="continuous" if kind == "count" else kind)
    )


def _weights(p_rows: np.ndarray) -> np.ndarray:
    if np.any(p_rows <= 0):
        # protocol-forced zeros never reach here (those rows are excluded from
        # fitting); a float-underflowed probability from a saturated
        # observation model gets a representable floor instead of an infinity
        p_rows = np.maximum(p_rows, 1e-12)
    return 1.0 / p_rows


def _run(kind: str, stage: str, fn):
    try:
        return fn()
    except (FrameworkError, regression.RegressionError, ValueError) as e:
        raise StageError(kind, stage, e) from e


# ---------------------------------------------------------------------------
# complete-case frameworks


def cc_all_stage(real: DataTable, config: GenerationConfig, rng: np.random.Generator) -> GenerationOutput:
    """Drop every row with any missing value once, then run the plain pipeline."""
    kind = "cc_all_stage"
    rngs = rng.spawn(6)
    cc = complete_cases(real)
    b = _Builder(kind, real, config, real.n_rows)
    _run(kind, "baseline", lambda: b.start(cc, rngs[0], rngs[1]))
    for i, (name, design, link) in enumerate(_stage_designs(real)):
        def stage():
            if link == "identity":
                m = regression.fit_linear(cc, design, drop_absent_levels=True)
                b.record_fit(name, m)
                b.gen_continuous(name, m, rngs[2 + i])
            else:
                m = regression.fit_logistic(cc, design, drop_absent_levels=True)
                b.record_fit(name, m)
                b.gen_outcome(name, m, rngs[2 + i])
        _run(kind, name, stage)
    return b.output(None)


def cc_by_stage(real: DataTable, config: GenerationConfig, rng: np.random.Generator) -> GenerationOutput:
    """Per stage, drop only rows missing a variable that stage touches."""
    kind = "cc_by_stage"
    rngs = rng.spawn(6)
    b = _Builder(kind, real, config, real.n_rows)
    _run(kind, "baseline", lambda: b.start(real, rngs[0], rngs[1]))
    for i, (name, design, link) in enumerate(_stage_designs(real)):
        def stage():
            sub = observed_subset(real, [name] + design.columns_used())
            if link == "identity":
                m = regression.fit_linear(sub, design, drop_absent_levels=True)
                b.record_fit(name, m)
                b.gen_continuous(name, m, rngs[2 + i])
            else:
                m = regression.fit_logistic(sub, design, drop_absent_levels=True)
                b.record_fit(name, m)
                b.gen_outcome(name, m, rngs[2 + i])
        _run(kind, name, stage)
    return b.output(None)


# ---------------------------------------------------------------------------
# IPW, non-monotone inputs


def _ipw_nonmono_shared(kind, real, config, rng):
    """Stages common to both non-monotone IPW variants: the observation model
    for the first follow-up and the weighted follow-up regressions."""
    rngs = rng.spawn(8)
    names = real.post_randomization_names()
    if len(names) != 2:
        raise FrameworkError(f"{kind} expects exactly two follow-up variables")
    z1, z2 = names
    y = real.outcome_name()
    base = tuple(real.baseline_names()) + (real.treatment_name(),)
    b = _Builder(kind, real, config, real.n_rows)
    _run(kind, "baseline", lambda: b.start(real, rngs[0], rngs[1]))

    z1_missing = not real.mask[z1].all()
    m_rz1 = None
    p1 = np.ones(real.n_rows)
    if z1_missing:
        m_rz1 = _run(kind, f"r:{z1}", lambda: _fit_indicator(real, z1, base))
        b.record_fit(f"r:{z1}", m_rz1)
        p1 = predict(m_rz1, real)

    z1_rows = np.flatnonzero(real.mask[z1])
    w1 = _weights(p1[z1_rows]) if z1_missing else None

    def fit_z1():
        sub = real.take(z1_rows)
        m = regression.fit_linear(sub, DesignSpec(z1, base), weights=w1, drop_absent_levels=True)
        b.record_fit(z1, m, p_fit=p1[z1_rows] if z1_missing else None)
        b.gen_continuous(z1, m, rngs[2])
    _run(kind, z1, fit_z1)

    def fit_z2():
        # same rows and same weights as the first follow-up stage
        z1_sub = real.take(z1_rows)
        keep = z1_sub.mask[z2]
        sub = z1_sub.take(np.flatnonzero(keep))
        w = None if w1 is None else w1[keep]
        m = regression.fit_linear(sub, DesignSpec(z2, base + (z1,)), weights=w, drop_absent_levels=True)
        b.record_fit(z2, m, p_fit=p1[z1_rows][keep] if z1_missing else None)
        b.gen_continuous(z2, m, rngs[3])
    _run(kind, z2, fit_z2)
    return b, rngs, z1, z2, y, base, m_rz1, p1


def ipw_indicator(real: DataTable, config: GenerationConfig, rng: np.random.Generator) -> GenerationOutput:
    """Weight by modeled observation probabilities; the outcome models use the
    first follow-up's observed-indicator and its interaction with the value
    instead of the value's main effect."""
    kind = "ipw_indicator"
    b, rngs, z1, z2, y, base, m_rz1, p1 = _ipw_nonmono_shared(kind, real, config, rng)
    y_missing = not real.mask[y].all()
    z1_missing = m_rz1 is not None

    if z1_missing:
        aug = _aug_with_indicator(real, z1)
        y_covs = base + (z2, f"r_{z1}", (f"r_{z1}", f"{z1}_filled"))
    else:
        aug = real
        y_covs = base + (z1, z2)

    m_ry = None
    py = np.ones(real.n_rows)
    if y_missing:
        m_ry = _run(kind, f"r:{y}", lambda: _fit_indicator(aug, y, y_covs))
        b.record_fit(f"r:{y}", m_ry)
        py = predict(m_ry, aug)

    y_rows = np.flatnonzero(real.mask[y])

    def fit_y():
        sub = aug.take(y_rows)
        w = _weights(py[y_rows]) if y_missing else None
        m = regression.fit_logistic(sub, DesignSpec(y, y_covs), weights=w, drop_absent_levels=True)
        b.record_fit(y, m, p_fit=py[y_rows] if y_missing else None)
        return m
    g_y = _run(kind, y, fit_y)

    # synthetic indicator for the first follow-up is drawn before the outcome
    # because the outcome models condition on it
    r1_syn = np.ones(real.n_rows)
    if z1_missing:
        p = predict(m_rz1, b.syn)
        p = np.where(b.flagged, 0.0, p)
        r1_syn = draw_bernoulli(p, rngs[4])

    def syn_aug(t: DataTable) -> DataTable:
        # works for row subsets too: the synthetic indicator is indexed by the
        # table's original row ids
        if not z1_missing:
            return t
        r1 = r1_syn[t.row_ids]
        filled = np.where((r1 == 1.0) & t.mask[z1], t.columns[z1], 0.0)
        return t.with_column(f"r_{z1}", r1).with_column(f"{z1}_filled", filled, kind="continuous")

    def gen_y():
        s = syn_aug(b.syn)
        ok = np.flatnonzero(~b.flagged)
        p = predict(g_y, s.take(ok))
        b.add_stage_column(y, draw_bernoulli(p, rngs[5]), ok)
    _run(kind, f"gen:{y}", gen_y)

    if not config.generate_missingness:
        return b.output(None)

    def miss():
        models = []
        if z1_missing:
            # reuse the indicator drawn before outcome generation
            models.append((z1, lambda t, drawn: r1_syn[t.row_ids]))
        if y_missing:
            def p_y(t, drawn):
                return predict(m_ry, syn_aug(t))
            models.append((y, p_y))
        masked, _ = generate_synthetic_missingness(
            models, b.syn, "non_monotone", rngs[6],
            forced_zero=b.forced_zero([z1, y]),
        )
        return masked
    return b.output(_run(kind, "missingness", miss) if (z1_missing or y_missing) else b.syn)


def ipw_force_monotonicity(real: DataTable, config: GenerationConfig, rng: np.random.Generator) -> GenerationOutput:
    """Force the outcome missing wherever the first follow-up is missing, then
    weight the outcome model by the two-factor product decomposition."""
    kind = "ipw_force_monotonicity"
    b, rngs, z1, z2, y, base, m_rz1, p1 = _ipw_nonmono_shared(kind, real, config, rng)
    z1_missing = m_rz1 is not None
    y_missing = not real.mask[y].all()
    y_covs = base + (z1, z2)

    m_ry_c = m_rz1_z2 = None
    py = np.ones(real.n_rows)
    if z1_missing or y_missing:
        forced_mask = real.mask[y] & real.mask[z1]
        forced = real.with_masks({y: forced_mask})
        z1_rows = np.flatnonzero(real.mask[z1])
        # factor one: outcome observed given the first follow-up observed
        # (skipped when the outcome never goes missing among those rows)
        if y_missing:
            m_ry_c = _run(kind, f"r:{y}|obs", lambda: _fit_indicator(forced, y, y_covs, rows=z1_rows))
            b.record_fit(f"r:{y}|obs", m_ry_c)
        # factor two: the first follow-up observed (conditioning on the later
        # stage is temporally odd but is the primary variant; see config)
        if z1_missing:
            rz1_covs = base + (z2,) if config.force_mono_uses_later_stage else base
            m_rz1_z2 = _run(kind, f"r:{z1}|late", lambda: _fit_indicator(real, z1, rz1_covs))
            b.record_fit(f"r:{z1}|late", m_rz1_z2)
        # rows with the first follow-up missing get probability zero by the
        # forced-monotone definition, so the factors are evaluated on the
        # observed subset only (whose strata the conditional fit has seen)
        sub = real.take(z1_rows)
        f1 = predict(m_ry_c, sub) if m_ry_c is not None else 1.0
        f2 = predict(m_rz1_z2, sub) if m_rz1_z2 is not None else 1.0
        py = np.zeros(real.n_rows)
        py[z1_rows] = f1 * f2
        y_rows = np.flatnonzero(forced_mask)
    else:
        y_rows = np.flatnonzero(real.mask[y])

    def fit_y():
        sub = real.take(y_rows)
        w = _weights(py[y_rows]) if (z1_missing or y_missing) else None
        m = regression.fit_logistic(sub, DesignSpec(y, y_covs), weights=w, drop_absent_levels=True)
        b.record_fit(y, m, p_fit=py[y_rows] if w is not None else None)
        return m
    g_y = _run(kind, y, fit_y)

    def gen_y():
        ok, p = b.predict_ok(g_y)
        b.add_stage_column(y, draw_bernoulli(p, rngs[4]), ok)
    _run(kind, f"gen:{y}", gen_y)

    if not config.generate_missingness or not (z1_missing or y_missing):
        return b.output(None if not config.generate_missingness else b.syn)

    def miss():
        models = []
        if z1_missing:
            models.append((z1, lambda t, drawn: predict(m_rz1, t)))

        def p_y(t, drawn):
            f1 = predict(m_ry_c, t) if m_ry_c is not None else 1.0
            f2 = predict(m_rz1_z2, t) if m_rz1_z2 is not None else 1.0
            return np.broadcast_to(np.asarray(f1 * f2, dtype=np.float64), (t.n_rows,)).copy()
        models.append((y, p_y))
        masked, _ = generate_synthetic_missingness(
            models, b.syn, "non_monotone", rngs[5],
            forced_zero=b.forced_zero([z1, y]),
        )
        return masked
    return b.output(_run(kind, "missingness", miss))


# ---------------------------------------------------------------------------
# IPW, monotone inputs


def ipw_monotone(real: DataTable, config: GenerationConfig, rng: np.random.Generator) -> GenerationOutput:
    """Sequential conditional observation models; each stage's marginal
    probability is the cumulative product along the dropout chain."""
    kind = "ipw_monotone"
    rngs = rng.spawn(8)
    names = real.post_randomization_names()
    if len(names) != 2:
        raise FrameworkError(f"{kind} expects exactly two follow-up variables")
    z1, z2 = names
    y = real.outcome_name()
    base = tuple(real.baseline_names()) + (real.treatment_name(),)
    b = _Builder(kind, real, config, real.n_rows)
    _run(kind, "baseline", lambda: b.start(real, rngs[0], rngs[1]))

    cond_models: dict[str, regression.FittedRegression | None] = {}
    cum_p = np.ones(real.n_rows)
    stage_specs = [
        (z1, base, None),
        (z2, base + (z1,), z1),
        (y, base + (z1, z2), z2),
    ]
    gen_rng = {z1: rngs[2], z2: rngs[3], y: rngs[4]}
    for name, covs, upstream in stage_specs:
        has_missing = not real.mask[name].all()
        rows = None if upstream is None else np.flatnonzero(real.mask[upstream])
        m_cond = None
        if has_missing:
            m_cond = _run(kind, f"r:{name}", lambda n=name, c=covs, r=rows: _fit_indicator(real, n, c, rows=r))
            b.record_fit(f"r:{name}", m_cond)
        cond_models[name] = m_cond
        if m_cond is not None:
            p_cond = np.zeros(real.n_rows)
            ok = np.ones(real.n_rows, dtype=bool) if upstream is None else real.mask[upstream]
            p_cond[ok] = _predict_monotone(m_cond, real, ok)
            cum_p = np.where(ok, cum_p * p_cond, 0.0)

        fit_rows = np.flatnonzero(real.mask[name] & (real.mask[upstream] if upstream else True))
        weighted = bool(cum_p[fit_rows].min() < 1.0) if len(fit_rows) else False

        def stage(n=name, c=covs, fr=fit_rows, w=weighted):
            sub = real.take(fr)
            wts = _weights(cum_p[fr]) if w else None
            if n == y:
                m = regression.fit_logistic(sub, DesignSpec(n, c), weights=wts, drop_absent_levels=True)
                b.record_fit(n, m, p_fit=cum_p[fr] if w else None)
                b.gen_outcome(n, m, gen_rng[n])
            else:
                m = regression.fit_linear(sub, DesignSpec(n, c), weights=wts, drop_absent_levels=True)
                b.record_fit(n, m, p_fit=cum_p[fr] if w else None)
                b.gen_continuous(n, m, gen_rng[n])
        _run(kind, name, stage)

    if not config.generate_missingness:
        return b.output(None)
    if all(m is None for m in cond_models.values()):
        return b.output(b.syn)

    def miss():
        models = []
        for name, _, _ in stage_specs:
            m = cond_models[name]
            if m is None:
                models.append((name, lambda t, drawn: np.ones(t.n_rows)))
            else:
                models.append((name, lambda t, drawn, mm=m: predict(mm, t)))
        masked, _ = generate_synthetic_missingness(
            models, b.syn, "monotone", rngs[5],
            forced_zero=b.forced_zero([z1, z2, y]),
        )
        return masked
    return b.output(_run(kind, "missingness", miss))


def _predict_monotone(model, real: DataTable, ok: np.ndarray) -> np.ndarray:
    sub = real.take(np.flatnonzero(ok))
    return predict(model, sub)


# ---------------------------------------------------------------------------
# multiple imputation


def mi(real: DataTable, config: GenerationConfig, rng: np.random.Generator, pattern: str = "non_monotone") -> GenerationOutput:
    """Impute m completed tables, generate one synthetic vector per table per
    stage, then per row sample uniformly across the m candidates. Synthetic
    missingness reuses the pattern-appropriate observation models fit on the
    real (masked) data."""
    kind = "mi"
    fracs = {n: float(np.mean(~real.mask[n])) for n in real.temporal_names()}
    max_frac = max(fracs.values())
    if max_frac == 0.0:
        out = cc_all_stage(real, config, rng)  # no missingness: plain pipeline
        out.kind = kind
        out.diagnostics.m_used = 0
        return GenerationOutput(kind, out.complete, out.complete, out.diagnostics)
    m = max(config.mi_min_m, math.ceil(100.0 * max_frac))
    rngs = rng.spawn(10)
    b = _Builder(kind, real, config, real.n_rows)
    b.diag.m_used = m
    _run(kind, "baseline", lambda: b.start(real, rngs[0], rngs[1]))

    completed = _run(kind, "imputation",
                     lambda: mice_impute(real, m, rngs[2], sweeps=config.mi_sweeps, donors=config.mi_donors))

    stages = _stage_designs(real)
    gen_rng = {name: r for (name, _, _), r in zip(stages, rngs[3].spawn(len(stages)))}
    pick_rng = rngs[4]
    for name, design, link in stages:
        def stage(n=name, d=design, lk=link):
            stage_rngs = gen_rng[n].spawn(m)
            candidates = np.empty((m, real.n_rows))
            observed = None
            for j, table_j in enumerate(completed):
                if lk == "identity":
                    mj = regression.fit_linear(table_j, d, drop_absent_levels=True)
                else:
                    mj = regression.fit_logistic(table_j, d, drop_absent_levels=True)
                if j == 0:
                    b.record_fit(n, mj)
                else:
                    b.flag_unseen(n, mj)
                ok = np.flatnonzero(~b.flagged)
                pred = predict(mj, b.syn.take(ok))
                row = np.full(real.n_rows, np.nan)
                if lk == "identity":
                    row[ok] = sample_admissible(pred, mj.residuals, config.threshold(n), stage_rngs[j])
                else:
                    row[ok] = draw_bernoulli(pred, stage_rngs[j])
                candidates[j] = row
                observed = ok if observed is None else np.intersect1d(observed, ok)
            values = mix_rows(candidates, pick_rng)
            b.add_stage_column(n, values[observed], observed)
        _run(kind, name, stage)

    if not config.generate_missingness:
        return b.output(None)

    names = real.post_randomization_names()
    z1, z2 = names
    y = real.outcome_name()
    base = tuple(real.baseline_names()) + (real.treatment_name(),)

    def miss():
        # observation models are fit on the real (masked) data here, so a
        # stratum can drop out at this point even though every generative fit
        # saw all rows; the forced map is built per target as flags accrue
        forced: dict[str, np.ndarray] = {}
        if pattern == "non_monotone":
            models = []
            z1_missing = not real.mask[z1].all()
            if z1_missing:
                m_rz1 = _fit_indicator(real, z1, base)
                b.record_fit(f"r:{z1}", m_rz1)

                def p_z1(t, drawn):
                    return predict(m_rz1, t)
                models.append((z1, p_z1))
            forced[z1] = b.flagged.copy()
            if not real.mask[y].all():
                if z1_missing:
                    aug = _aug_with_indicator(real, z1)
                    y_covs = base + (z2, f"r_{z1}", (f"r_{z1}", f"{z1}_filled"))
                else:
                    aug, y_covs = real, base + (z1, z2)
                m_ry = _fit_indicator(aug, y, y_covs)
                b.record_fit(f"r:{y}", m_ry)

                def p_y(t, drawn):
                    if z1_missing:
                        r1 = drawn.get(z1, np.ones(t.n_rows))
                        filled = np.where((r1 == 1.0) & t.mask[z1], t.columns[z1], 0.0)
                        t = t.with_column(f"r_{z1}", r1).with_column(f"{z1}_filled", filled, kind="continuous")
                    return predict(m_ry, t)
                models.append((y, p_y))
            forced[y] = b.flagged.copy()
            masked, _ = generate_synthetic_missingness(
                models, b.syn, "non_monotone", rngs[5], forced_zero=forced
            )
            return masked
        # monotone: sequential conditional models, as in the monotone IPW
        models = []
        for name, covs, upstream in ((z1, base, None), (z2, base + (z1,), z1), (y, base + (z1, z2), z2)):
            if real.mask[name].all():
                models.append((name, lambda t, drawn: np.ones(t.n_rows)))
            else:
                rows = None if upstream is None else np.flatnonzero(real.mask[upstream])
                m_cond = _fit_indicator(real, name, covs, rows=rows)
                b.record_fit(f"r:{name}", m_cond)
                models.append((name, lambda t, drawn, mm=m_cond: predict(mm, t)))
            forced[name] = b.flagged.copy()
        masked, _ = generate_synthetic_missingness(
            models, b.syn, "monotone", rngs[5], forced_zero=forced
        )
        return masked
    return b.output(_run(kind, "missingness", miss))


# ---------------------------------------------------------------------------
# dispatcher


def resolve_kind(kind: str) -> str:
    kind = ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise FrameworkError(f"unknown framework {kind!r}; known: {KINDS} (+ aliases {sorted(ALIASES)})")
    return kind


def input_pattern(real: ImposedTable | DataTable) -> str:
    if isinstance(real, ImposedTable):
        return real.scenario.pattern
    t = real
    return "monotone" if is_monotone(t) else "non_monotone"


def generate(
    kind: str,
    real: ImposedTable | DataTable,
    config: GenerationConfig | None = None,
    rng: np.random.Generator | None = None,
) -> GenerationOutput:
    """Run one framework against a (possibly masked) real table."""
    kind = resolve_kind(kind)
    config = config or GenerationConfig()
    rng = rng if rng is not None else np.random.default_rng()
    table = real.table if isinstance(real, ImposedTable) else real
    if table.col_schema(table.outcome_name()).kind != "binary":
        raise FrameworkError("generation requires a binary outcome column")
    has_missing = not table.all_observed()
    pattern = input_pattern(real)
    if has_missing:
        if kind in ("ipw_indicator", "ipw_force_monotonicity") and pattern != "non_monotone":
            raise FrameworkError(f"{kind} requires a non-monotone input pattern")
        if kind == "ipw_monotone" and (pattern != "monotone" or not is_monotone(table)):
            raise FrameworkError("ipw_monotone requires a monotone input pattern")
        if kind in ("ipw_indicator", "ipw_force_monotonicity"):
            for name in table.post_randomization_names()[1:]:
                if not table.mask[name].all():
                    raise FrameworkError(
                        f"{kind} assumes later follow-ups are fully observed; {name!r} has missing cells"
                    )
    if kind == "cc_all_stage":
        return cc_all_stage(table, config, rng)
    if kind == "cc_by_stage":
        return cc_by_stage(table, config, rng)
    if kind == "ipw_indicator":
        return ipw_indicator(table, config, rng)
    if kind == "ipw_force_monotonicity":
        return ipw_force_monotonicity(table, config, rng)
    if kind == "ipw_monotone":
        return ipw_monotone(table, config, rng)
    return mi(table, config, rng, pattern=pattern)

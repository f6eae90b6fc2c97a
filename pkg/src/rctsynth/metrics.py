"""Fidelity metrics: distributional similarity, PCA comparison, ML efficacy,
trial inference, and missingness-proportion diagnostics.

All similarity scores live in [0, 1] with 1 meaning the synthetic data are
indistinguishable from the real on that axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from . import regression
from .frameworks import GenerationOutput
from .gbt import GradientBoostedTrees
from .missingness import ImposedTable
from .table import DataTable, complete_cases, dichotomize_treatment


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# univariate similarity


def ks_complement(real: np.ndarray, synth: np.ndarray) -> float:
    """One minus the two-sample sup distance between empirical CDFs."""
    real = np.asarray(real, dtype=np.float64)
    synth = np.asarray(synth, dtype=np.float64)
    if len(real) == 0 or len(synth) == 0:
        raise MetricError("ks_complement needs non-empty samples")
    grid = np.union1d(real, synth)
    fr = np.searchsorted(np.sort(real), grid, side="right") / len(real)
    fs = np.searchsorted(np.sort(synth), grid, side="right") / len(synth)
    return float(1.0 - np.max(np.abs(fr - fs)))


def tvd_complement(real: np.ndarray, synth: np.ndarray) -> float:
    """One minus the total variation distance over the union of strata."""
    real = np.asarray(real)
    synth = np.asarray(synth)
    if len(real) == 0 or len(synth) == 0:
        raise MetricError("tvd_complement needs non-empty samples")
    strata = np.union1d(real, synth)
    pr = np.array([np.mean(real == a) for a in strata])
    ps = np.array([np.mean(synth == a) for a in strata])
    # the summed differences can overshoot 2 by an ulp
    return float(min(max(1.0 - 0.5 * np.sum(np.abs(pr - ps)), 0.0), 1.0))


# ---------------------------------------------------------------------------
# bivariate similarity


def _spearman(x: np.ndarray, y: np.ndarray) -> float:
    rx = rankdata(x)
    ry = rankdata(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0 or sy == 0:
        raise MetricError("constant column; rank correlation undefined")
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def spearman_similarity(real_pair: tuple[np.ndarray, np.ndarray],
                        synth_pair: tuple[np.ndarray, np.ndarray]) -> float:
    """One minus half the absolute difference of the rank correlations."""
    if len(real_pair[0]) < 3 or len(synth_pair[0]) < 3:
        raise MetricError("spearman_similarity needs at least 3 complete pairs")
    rho_r = _spearman(*real_pair)
    rho_s = _spearman(*synth_pair)
    return float(min(max(1.0 - 0.5 * abs(rho_r - rho_s), 0.0), 1.0))


def quartile_bins(reference: np.ndarray) -> np.ndarray:
    """Quartile boundaries of the real data; ties on a boundary go low."""
    return np.quantile(np.asarray(reference, dtype=np.float64), (0.25, 0.5, 0.75))


def _bin_by(values: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    return np.searchsorted(bounds, values, side="left").astype(np.float64)


def contingency_similarity(
    real_pair: tuple[np.ndarray, np.ndarray],
    synth_pair: tuple[np.ndarray, np.ndarray],
    continuous: tuple[bool, bool] = (False, False),
) -> float:
    """One minus half the summed absolute cell-proportion differences of the
    two-way table; continuous members are quartile-binned on the real data's
    boundaries (applied to both datasets)."""
    if len(real_pair[0]) == 0 or len(synth_pair[0]) == 0:
        raise MetricError("contingency_similarity needs non-empty samples")
    cols_r, cols_s = [], []
    for k in range(2):
        r, s = np.asarray(real_pair[k], dtype=np.float64), np.asarray(synth_pair[k], dtype=np.float64)
        if continuous[k]:
            bounds = quartile_bins(r)
            r, s = _bin_by(r, bounds), _bin_by(s, bounds)
        cols_r.append(r)
        cols_s.append(s)
    cells_r = cols_r[0] * 1000003.0 + cols_r[1]
    cells_s = cols_s[0] * 1000003.0 + cols_s[1]
    return tvd_complement(cells_r, cells_s)


# ---------------------------------------------------------------------------
# PCA comparison


@dataclass
class PCAPanel:
    loadings: np.ndarray  # columns are the two leading components
    projections: np.ndarray
    explained: tuple[float, float]
    spectrum: np.ndarray  # all eigenvalues, descending


@dataclass
class PCASummaryPair:
    columns: tuple[str, ...]
    real: PCAPanel
    synth: PCAPanel


def _pca_panel(X: np.ndarray) -> PCAPanel:
    n = X.shape[0]
    if n < 3:
        raise MetricError("PCA needs at least 3 rows")
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise MetricError("constant column in PCA input")
    Z = (X - mu) / sd
    corr = Z.T @ Z / (n - 1)
    vals, vecs = np.linalg.eigh(corr)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    lead = vecs[:, :2].copy()
    for k in range(2):  # sign convention: largest-magnitude loading positive
        j = np.argmax(np.abs(lead[:, k]))
        if lead[j, k] < 0:
            lead[:, k] = -lead[:, k]
    total = vals.sum()
    return PCAPanel(lead, Z @ lead, (float(vals[0] / total), float(vals[1] / total)), vals)


def pca_compare(real: DataTable, synth: DataTable, columns: list[str]) -> PCASummaryPair:
    """Center+scale each dataset by its own moments, eigendecompose each
    correlation matrix, and report the two leading components."""
    def matrix(t: DataTable) -> np.ndarray:
        X = np.column_stack([t.columns[c] for c in columns])
        keep = ~np.isnan(X).any(axis=1)
        return X[keep]

    return PCASummaryPair(tuple(columns), _pca_panel(matrix(real)), _pca_panel(matrix(synth)))


# ---------------------------------------------------------------------------
# ML efficacy


def _feature_matrix(t: DataTable) -> tuple[np.ndarray, list[str]]:
    cols, names = [], []
    for c in t.schema:
        v = t.columns[c.name].copy()
        v[~t.mask[c.name]] = np.nan
        if c.kind == "categorical":
            for k, lv in enumerate(c.levels):
                col = np.where(np.isnan(v), np.nan, (v == k).astype(np.float64))
                cols.append(col)
                names.append(f"{c.name}={lv}")
        else:
            cols.append(v)
            names.append(c.name)
    return np.column_stack(cols), names


def _standardize_features(X: np.ndarray) -> np.ndarray:
    mu = np.nanmean(X, axis=0)
    sd = np.nanstd(X, axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def knn_impute(X: np.ndarray, k: int = 5) -> np.ndarray:
    """Fill NaNs from the k rows nearest in the shared observed coordinates
    (averaging the donors; features are assumed standardized)."""
    rows_with_nan = np.flatnonzero(np.isnan(X).any(axis=1))
    if len(rows_with_nan) == 0:
        return X
    W = (~np.isnan(X)).astype(np.float64)
    X0 = np.where(np.isnan(X), 0.0, X)
    sq = X0**2
    Wm, Xm, sqm = W[rows_with_nan], X0[rows_with_nan], sq[rows_with_nan]
    shared = Wm @ W.T
    d2 = sqm @ W.T + Wm @ sq.T - 2.0 * (Xm @ X0.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        d2 = np.where(shared > 0, d2 / shared, np.inf)
    d2[np.arange(len(rows_with_nan)), rows_with_nan] = np.inf
    out = X.copy()
    row_pos = {r: i for i, r in enumerate(rows_with_nan)}
    for j in range(X.shape[1]):
        miss = np.flatnonzero(np.isnan(X[:, j]))
        if len(miss) == 0:
            continue
        donors = np.flatnonzero(~np.isnan(X[:, j]))
        dd = d2[np.ix_([row_pos[r] for r in miss], donors)]
        kk = min(k, len(donors))
        nearest = np.argpartition(dd, kk - 1, axis=1)[:, :kk]
        out[miss, j] = X[donors[nearest], j].mean(axis=1)
    return out


def _knn_predict(Xtr: np.ndarray, ytr: np.ndarray, Xte: np.ndarray, k: int = 5) -> np.ndarray:
    d2 = (Xte**2).sum(1)[:, None] + (Xtr**2).sum(1)[None, :] - 2.0 * Xte @ Xtr.T
    kk = min(k, Xtr.shape[0])
    nearest = np.argpartition(d2, kk - 1, axis=1)[:, :kk]
    return (ytr[nearest].mean(axis=1) > 0.5).astype(np.float64)


def _grouped_stratified_test_rows(
    X: np.ndarray, y: np.ndarray, test_fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Seeded stratified split that keeps byte-identical feature rows in the
    same fold; splitting an exact duplicate pair with opposite labels across
    folds lets memorizing classifiers anti-predict instead of sitting at
    chance. Generic tables have all-singleton groups, so this reduces to a
    plain stratified split."""
    canon = np.where(np.isnan(X), np.inf, X)
    _, group_of = np.unique(canon, axis=0, return_inverse=True)
    n_groups = group_of.max() + 1
    members: list[list[int]] = [[] for _ in range(n_groups)]
    for i, g in enumerate(group_of):
        members[g].append(i)
    need = {label: int(round(test_fraction * np.sum(y == label))) for label in (0.0, 1.0)}
    test = np.zeros(len(y), dtype=bool)
    for g in rng.permutation(n_groups):
        rows = members[g]
        counts = {label: sum(1 for i in rows if y[i] == label) for label in (0.0, 1.0)}
        if all(need[label] >= counts[label] for label in (0.0, 1.0)):
            for i in rows:
                test[i] = True
            for label in (0.0, 1.0):
                need[label] -= counts[label]
        if need[0.0] == 0 and need[1.0] == 0:
            break
    return test


def _classification_complements(y_true: np.ndarray, y_hat: np.ndarray) -> dict[str, float]:
    tp = float(np.sum((y_hat == 1) & (y_true == 1)))
    tn = float(np.sum((y_hat == 0) & (y_true == 0)))
    fp = float(np.sum((y_hat == 1) & (y_true == 0)))
    fn = float(np.sum((y_hat == 0) & (y_true == 1)))
    acc = (tp + tn) / len(y_true)
    prec = tp / (tp + fp) if tp + fp > 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return {
        "accuracy": 1.0 - acc,
        "precision": 1.0 - prec,
        "recall": 1.0 - rec,
        "f1": 1.0 - f1,
    }


def ml_efficacy(
    real: DataTable,
    synth: DataTable,
    classifier: str,
    rng: np.random.Generator,
    test_fraction: float = 0.3,
) -> dict[str, float]:
    """Complements of accuracy/precision/recall/F1 for telling synthetic rows
    (the positive label) from real ones; 0.5 accuracy-complement means the
    classifier is at chance.

    Rows are put in a canonical order before the seeded stratified split, so
    shuffled inputs give identical results under the same rng.
    """
    if [c.name for c in real.schema] != [c.name for c in synth.schema]:
        raise MetricError("tables must share a schema")
    Xr, _ = _feature_matrix(real)
    Xs, _ = _feature_matrix(synth)
    X = np.vstack([Xr, Xs])
    y = np.concatenate([np.zeros(len(Xr)), np.ones(len(Xs))])
    order = np.lexsort(tuple(X[:, j] for j in range(X.shape[1])) + (y,))
    X, y = X[order], y[order]
    test = _grouped_stratified_test_rows(X, y, test_fraction, rng)
    if len(np.unique(y[test])) < 2 or len(np.unique(y[~test])) < 2:
        raise MetricError("degenerate single-class fold")

    if classifier == "knn5":
        Z = knn_impute(_standardize_features(X), k=5)
        y_hat = _knn_predict(Z[~test], y[~test], Z[test], k=5)
    elif classifier == "boosted_trees":
        model = GradientBoostedTrees().fit(X[~test], y[~test])
        y_hat = model.predict(X[test])
    else:
        raise MetricError(f"unknown classifier {classifier!r}")
    return _classification_complements(y[test], y_hat)


# ---------------------------------------------------------------------------
# trial inference


@dataclass(frozen=True)
class OddsRatioEstimate:
    odds_ratio: float
    ci_low: float
    ci_high: float
    n: int

    def log_or(self) -> float:
        return float(np.log(self.odds_ratio))

    def overlaps(self, other: "OddsRatioEstimate") -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high


def trial_or(t: DataTable, variant: str = "complete") -> OddsRatioEstimate:
    """Odds ratio (with Wald 95% CI) of the outcome on binary treatment.

    variant="observed" restricts to complete cases first; the treatment must
    already be dichotomized.
    """
    if variant not in ("complete", "observed"):
        raise MetricError(f"unknown variant {variant!r}")
    data = complete_cases(t) if variant == "observed" else t
    if not data.all_observed():
        data = complete_cases(data)
    tname = data.treatment_name()
    if data.col_schema(tname).kind != "binary":
        raise MetricError("treatment must be dichotomized before trial_or")
    design = regression.DesignSpec(data.outcome_name(), (tname,))
    model = regression.fit_logistic(data, design)
    X, _ = regression.build_design_matrix(data, design)
    p = expit(X @ model.coefficients)
    info = X.T @ (X * (p * (1 - p))[:, None])
    cov = np.linalg.inv(info)
    b = float(model.coefficients[1])
    se = float(np.sqrt(cov[1, 1]))
    return OddsRatioEstimate(
        odds_ratio=float(np.exp(b)),
        ci_low=float(np.exp(b - 1.96 * se)),
        ci_high=float(np.exp(b + 1.96 * se)),
        n=data.n_rows,
    )


# ---------------------------------------------------------------------------
# full per-run report


@dataclass
class MetricReport:
    univariate: dict[str, dict[str, float]] = field(default_factory=dict)
    bivariate: dict[str, dict[str, float]] = field(default_factory=dict)
    pca: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)
    efficacy: dict[str, dict[str, float]] = field(default_factory=dict)
    efficacy_tables: str = ""
    inference: dict[str, dict[str, float]] = field(default_factory=dict)
    missingness: dict[str, dict[str, float]] = field(default_factory=dict)


@dataclass
class MetricToggles:
    univariate: bool = True
    bivariate: bool = True
    pca: bool = True
    ml_efficacy: bool = True
    inference: bool = True
    classifiers: tuple[str, ...] = ("knn5", "boosted_trees")


def _univariate_metric(kind: str):
    return ks_complement if kind in ("continuous", "count") else tvd_complement


def _pair_values(t: DataTable, a: str, b: str) -> tuple[np.ndarray, np.ndarray]:
    keep = t.mask[a] & t.mask[b]
    return t.columns[a][keep], t.columns[b][keep]


def compute_report(
    imposed: ImposedTable,
    output: GenerationOutput,
    rng: np.random.Generator,
    baseline_arm: str = "0",
    toggles: MetricToggles | None = None,
) -> MetricReport:
    """All enabled metrics for one generation run.

    The observed variant compares masked real to masked synthetic (falling
    back to the complete synthetic table for frameworks that cannot produce
    missingness); the complete variant compares the pre-mask truth to the
    complete synthetic table.
    """
    toggles = toggles or MetricToggles()
    report = MetricReport()
    truth = imposed.truth
    masked = imposed.table
    syn_complete = output.complete
    syn_observed = output.with_missingness if output.with_missingness is not None else syn_complete

    if toggles.univariate:
        for variant, (r_t, s_t) in (("observed", (masked, syn_observed)),
                                    ("complete", (truth, syn_complete))):
            scores = {}
            for c in r_t.schema:
                metric = _univariate_metric(c.kind)
                scores[c.name] = metric(r_t.observed(c.name), s_t.observed(c.name))
            report.univariate[variant] = scores

    if toggles.bivariate:
        spearman_scores, contingency_scores = {}, {}
        names = masked.names
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                ka = masked.col_schema(a).kind in ("continuous", "count")
                kb = masked.col_schema(b).kind in ("continuous", "count")
                rp = _pair_values(masked, a, b)
                sp = _pair_values(syn_observed, a, b)
                key = f"{a}|{b}"
                if ka and kb:
                    spearman_scores[key] = spearman_similarity(rp, sp)
                else:
                    contingency_scores[key] = contingency_similarity(rp, sp, continuous=(ka, kb))
        report.bivariate["spearman"] = spearman_scores
        report.bivariate["contingency"] = contingency_scores

    if toggles.pca:
        continuous = [c.name for c in masked.schema if c.kind in ("continuous", "count")]
        for variant, (r_t, s_t) in (("complete", (truth, syn_complete)),
                                    ("observed", (masked, syn_observed))):
            pair = pca_compare(r_t, s_t, continuous)
            report.pca[variant] = {"real": pair.real.explained, "synth": pair.synth.explained}

    if toggles.ml_efficacy:
        if output.kind.startswith("cc_"):
            tables = (truth, syn_complete)
            report.efficacy_tables = "complete"
        else:
            tables = (masked, syn_observed)
            report.efficacy_tables = "observed"
        for clf in toggles.classifiers:
            report.efficacy[clf] = ml_efficacy(tables[0], tables[1], clf, rng.spawn(1)[0])

    if toggles.inference:
        for variant, (r_t, s_t) in (("complete", (truth, syn_complete)),
                                    ("observed", (masked, syn_observed))):
            real_est = trial_or(dichotomize_treatment(r_t, baseline_arm), variant)
            syn_est = trial_or(dichotomize_treatment(s_t, baseline_arm), variant)
            report.inference[variant] = {
                "or": syn_est.odds_ratio, "lo": syn_est.ci_low, "hi": syn_est.ci_high,
                "real_or": real_est.odds_ratio, "real_lo": real_est.ci_low, "real_hi": real_est.ci_high,
            }

    for name, real_prop in imposed.realized_proportions.items():
        syn_prop = float(np.mean(~syn_observed.mask[name])) if output.with_missingness is not None else 0.0
        report.missingness[name] = {"synthetic": syn_prop, "real": real_prop}
    return report

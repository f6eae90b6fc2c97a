"""Complete synthetic baseline covariates and randomized treatment assignment.

A Gaussian copula over empirical marginals stands in for the vine copula a
richer stack would use; the generator interface is the contract, so a vine
can replace it without touching any framework. Continuous marginals map to
normal scores by rank transform, categorical/ordinal marginals by jittered
latent thresholds at cumulative-frequency quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .table import ColumnSchema, DataTable, make_table

# jitter stream for latent scores of discrete columns; fixed so that fitting
# stays a pure function of the data
_JITTER_SEED = 711


class ConstantColumnError(ValueError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"column {name!r} is constant; copula scores are undefined")


@dataclass(frozen=True)
class CopulaModel:
    columns: tuple[str, ...]
    schema: tuple[ColumnSchema, ...]
    correlation: np.ndarray
    # continuous marginals: sorted observed values; discrete: level frequencies
    continuous_marginals: dict[str, np.ndarray]
    discrete_marginals: dict[str, np.ndarray]


@dataclass(frozen=True)
class TreatmentDistribution:
    levels: tuple[str, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probabilities)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("treatment probabilities must be nonnegative and sum to 1")
        if len(self.levels) != len(self.probabilities):
            raise ValueError("levels and probabilities must align")


def _normal_scores_continuous(values: np.ndarray) -> np.ndarray:
    n = len(values)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(n)
    ranks[order] = np.arange(1, n + 1)
    # average ranks over ties
    uniq, inverse = np.unique(values, return_inverse=True)
    if len(uniq) < n:
        sums = np.bincount(inverse, weights=ranks)
        counts = np.bincount(inverse)
        ranks = (sums / counts)[inverse]
    if len(uniq) == 1:
        raise ConstantColumnError("")
    return ndtri(ranks / (n + 1))


def _normal_scores_discrete(codes: np.ndarray, n_levels: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = len(codes)
    freqs = np.bincount(codes.astype(int), minlength=n_levels) / n
    if np.max(freqs) == 1.0:
        raise ConstantColumnError("")
    cum = np.concatenate([[0.0], np.cumsum(freqs)])
    u = cum[codes.astype(int)] + rng.random(n) * freqs[codes.astype(int)]
    u = np.clip(u, 1e-10, 1 - 1e-10)
    return ndtri(u), freqs


def nearest_psd_correlation(corr: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Clip eigenvalues at a small floor, then renormalize the diagonal."""
    corr = (corr + corr.T) / 2.0
    vals, vecs = np.linalg.eigh(corr)
    if vals.min() >= floor:
        return corr
    vals = np.maximum(vals, floor)
    fixed = (vecs * vals) @ vecs.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    return (fixed + fixed.T) / 2.0


def fit_copula(t: DataTable) -> CopulaModel:
    """Fit the baseline generator to fully observed baseline columns."""
    names = t.baseline_names()
    for name in names:
        if not t.mask[name].all():
            raise ValueError(f"baseline column {name!r} must be fully observed")
    if t.n_rows < 2 * len(names):
        raise ValueError(f"need at least {2 * len(names)} rows to fit {len(names)} marginals")
    rng = np.random.default_rng(_JITTER_SEED)
    scores = np.empty((t.n_rows, len(names)))
    continuous, discrete = {}, {}
    schema = []
    for j, name in enumerate(names):
        c = t.col_schema(name)
        schema.append(c)
        vals = t.columns[name]
        try:
            if c.kind in ("continuous", "count"):
                scores[:, j] = _normal_scores_continuous(vals)
                continuous[name] = np.sort(vals)
            else:
                n_levels = len(c.levels) if c.kind == "categorical" else 2
                scores[:, j], freqs = _normal_scores_discrete(vals, n_levels, rng)
                discrete[name] = freqs
        except ConstantColumnError:
            raise ConstantColumnError(name) from None
    if len(names) == 1:
        corr = np.ones((1, 1))
    else:
        corr = np.corrcoef(scores, rowvar=False)
        corr = nearest_psd_correlation(corr)
    return CopulaModel(tuple(names), tuple(schema), corr, continuous, discrete)


def sample_copula(model: CopulaModel, n: int, rng: np.random.Generator) -> DataTable:
    """Draw n fully observed baseline rows from the fitted copula."""
    if n < 1:
        raise ValueError("n must be >= 1")
    vals, vecs = np.linalg.eigh(model.correlation)
    factor = vecs * np.sqrt(np.maximum(vals, 0.0))
    z = rng.standard_normal((n, len(model.columns))) @ factor.T
    u = ndtr(z)
    out = {}
    for j, name in enumerate(model.columns):
        if name in model.continuous_marginals:
            sorted_vals = model.continuous_marginals[name]
            m = len(sorted_vals)
            grid = np.arange(1, m + 1) / (m + 1)
            out[name] = np.interp(u[:, j], grid, sorted_vals)
        else:
            cum = np.cumsum(model.discrete_marginals[name])
            out[name] = np.searchsorted(cum, u[:, j], side="left").astype(np.float64)
    return make_table(model.schema, out)


def sample_treatment(dist: TreatmentDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. categorical draws, returned as level codes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.choice(len(dist.levels), size=n, p=np.asarray(dist.probabilities)).astype(np.float64)

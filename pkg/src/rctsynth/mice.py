"""Chained-equations imputation with predictive mean matching.

Each partially observed column is imputed conditional on every other column,
cycling in temporal order for a fixed number of sweeps (chained equations
carry no convergence criterion). Continuous/count targets use PMM with a
small nearest-donor pool; binary targets use a logistic draw, since matching
on a binary mean degenerates to class sampling.
"""

from __future__ import annotations

import numpy as np

from . import regression
from .table import DataTable, make_table


def _imputation_design(t: DataTable, target: str) -> regression.DesignSpec:
    covariates = tuple(n for n in t.names if n != target)
    return regression.DesignSpec(target, covariates)


def _completed(t: DataTable, values: dict[str, np.ndarray]) -> DataTable:
    cols = {n: values.get(n, t.columns[n]) for n in t.names}
    return make_table(t.schema, cols, row_ids=t.row_ids)


def mice_impute(
    t: DataTable,
    m: int,
    rng: np.random.Generator,
    sweeps: int = 10,
    donors: int = 5,
) -> list[DataTable]:
    """Impute m completed copies of the table.

    Chains are independent; within a chain, missing cells start as bootstrap
    draws from the column's observed values and are refreshed each sweep.
    """
    targets = [n for n in t.temporal_names() if not t.mask[n].all()]
    if not targets:
        return [t for _ in range(m)]
    obs_rows = {n: np.flatnonzero(t.mask[n]) for n in targets}
    mis_rows = {n: np.flatnonzero(~t.mask[n]) for n in targets}
    chains = rng.spawn(m)
    out = []
    for chain_rng in chains:
        filled = {}
        for name in targets:
            observed = t.columns[name][obs_rows[name]]
            draws = chain_rng.choice(observed, size=len(mis_rows[name]), replace=True)
            col = t.columns[name].copy()
            col[mis_rows[name]] = draws
            filled[name] = col
        warm: dict[str, np.ndarray] = {}
        for _ in range(sweeps):
            for name in targets:
                current = _completed(t, filled)
                design = _imputation_design(current, name)
                fit_t = current.take(obs_rows[name])
                mis_t = current.take(mis_rows[name])
                if t.col_schema(name).kind == "binary":
                    model = regression.fit_logistic(
                        fit_t, design, drop_absent_levels=True, start=warm.get(name)
                    )
                    warm[name] = model.coefficients
                    p = regression.predict(model, mis_t, unseen="zero")
                    imputed = regression.draw_bernoulli(p, chain_rng)
                else:
                    model = regression.fit_linear(fit_t, design, drop_absent_levels=True)
                    pred_obs = regression.predict(model, fit_t, unseen="zero")
                    pred_mis = regression.predict(model, mis_t, unseen="zero")
                    imputed = _pmm_draw(pred_obs, pred_mis, fit_t.columns[name], donors, chain_rng)
                col = filled[name].copy()
                col[mis_rows[name]] = imputed
                filled[name] = col
        out.append(_completed(t, filled))
    return out


def _pmm_draw(
    pred_obs: np.ndarray,
    pred_mis: np.ndarray,
    observed_values: np.ndarray,
    donors: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """For each missing row, draw one observed value among the `donors`
    observed rows whose predicted means sit closest.

    The nearest donors by |predicted difference| lie inside a window around
    the insertion point in the sorted predictions, so only a 2k-wide band is
    scored per row.
    """
    k = min(donors, len(pred_obs))
    if len(pred_obs) <= 2 * k:
        dist = np.abs(pred_mis[:, None] - pred_obs[None, :])
        pool = np.argpartition(dist, k - 1, axis=1)[:, :k] if len(pred_obs) > k else np.tile(
            np.arange(len(pred_obs)), (len(pred_mis), 1)
        )
        pick = rng.integers(0, pool.shape[1], size=len(pred_mis))
        return observed_values[pool[np.arange(len(pred_mis)), pick]]
    order = np.argsort(pred_obs, kind="stable")
    sorted_pred = pred_obs[order]
    pos = np.searchsorted(sorted_pred, pred_mis)
    start = np.clip(pos - k, 0, max(len(sorted_pred) - 2 * k, 0))
    window = start[:, None] + np.arange(2 * k)[None, :]
    window = np.minimum(window, len(sorted_pred) - 1)
    dist = np.abs(sorted_pred[window] - pred_mis[:, None])
    pool = np.argpartition(dist, k - 1, axis=1)[:, :k]
    pick = rng.integers(0, k, size=len(pred_mis))
    chosen = window[np.arange(len(pred_mis)), pool[np.arange(len(pred_mis)), pick]]
    return observed_values[order[chosen]]

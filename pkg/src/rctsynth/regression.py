"""Weighted linear and logistic regression plus the residual-based samplers.

Every sequential generation step runs through here: weighted least squares
(orthogonal factorization, never normal equations), logistic IRLS, prediction
on new tables, admissible-value sampling from a residual pool, and Bernoulli
outcome draws. All functions are pure given their rng.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .table import DataTable

# Term: a column name for a main effect, or a (a, b) pair for an elementwise
# product of two numeric columns.
Term = str | tuple[str, str]

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50
SEPARATION_BOUND = 30.0


class RegressionError(ValueError):
    pass


class DroppedStrataError(RegressionError):
    """Design is rank deficient because categorical levels have no fitting rows."""

    def __init__(self, levels: list[tuple[str, str]]):
        self.levels = levels
        super().__init__(f"levels absent from fitting data: {levels}")


class UnseenLevelError(RegressionError):
    """Prediction rows carry a categorical level the fit never saw."""

    def __init__(self, column: str, levels: list[str], rows: np.ndarray):
        self.column = column
        self.levels = levels
        self.rows = rows
        super().__init__(f"column {column!r} has unseen levels {levels} in {len(rows)} rows")


class NonConvergenceError(RegressionError):
    def __init__(self, coefficients: np.ndarray):
        self.coefficients = coefficients
        super().__init__("IRLS did not converge")


class SeparationError(RegressionError):
    def __init__(self, coefficients: np.ndarray):
        self.coefficients = coefficients
        super().__init__("coefficients diverged; response looks separated")


class EmptyAdmissibleSetError(RegressionError):
    def __init__(self, index: int, count: int):
        self.index = index
        self.count = count
        super().__init__(f"no admissible residual for {count} rows (first at index {index})")


@dataclass(frozen=True)
class DesignSpec:
    response: str
    covariates: tuple[Term, ...]
    intercept: bool = True

    def __post_init__(self):
        if self.response in self.covariates:
            raise RegressionError(f"response {self.response!r} cannot be a covariate")

    def columns_used(self) -> list[str]:
        out = []
        for term in self.covariates:
            if isinstance(term, tuple):
                out.extend(term)
            else:
                out.append(term)
        return out


def term_name(term: Term, level: str | None = None) -> str:
    if isinstance(term, tuple):
        return f"{term[0]}*{term[1]}"
    return f"{term}={level}" if level is not None else term


@dataclass(frozen=True)
class FittedRegression:
    design: DesignSpec
    link: str  # identity | logit
    coefficients: np.ndarray
    coef_names: tuple[str, ...]
    residuals: np.ndarray  # (response - fitted), identity link only
    weights: np.ndarray
    n_fit: int
    fit_row_ids: np.ndarray
    dropped_levels: tuple[tuple[str, str], ...] = ()
    seen_levels: dict[str, frozenset[int]] = field(default_factory=dict)
    n_iter: int = 0
    separated: bool = False  # logit only: fit stopped at a saturated solution


def _check_observed(t: DataTable, names: list[str]) -> None:
    for name in names:
        if not t.mask[name].all():
            raise RegressionError(f"column {name!r} is not fully observed on the fitting rows")


def _expand_term(t: DataTable, term: Term, dropped: set[tuple[str, str]]):
    """Yield (name, column) pairs for one design term."""
    if isinstance(term, tuple):
        a, b = term
        for n in (a, b):
            if t.col_schema(n).kind == "categorical":
                raise RegressionError(f"interaction term {term} references categorical {n!r}")
        yield term_name(term), t.columns[a] * t.columns[b]
        return
    c = t.col_schema(term)
    if c.kind == "categorical":
        codes = t.columns[term]
        for k, level in enumerate(c.levels[1:], start=1):  # first level is the reference
            if (term, level) in dropped:
                continue
            yield term_name(term, level), (codes == k).astype(np.float64)
    else:
        yield term, t.columns[term]


def build_design_matrix(
    t: DataTable,
    design: DesignSpec,
    dropped_levels: tuple[tuple[str, str], ...] = (),
) -> tuple[np.ndarray, tuple[str, ...]]:
    dropped = set(dropped_levels)
    cols, names = [], []
    if design.intercept:
        cols.append(np.ones(t.n_rows))
        names.append("intercept")
    for term in design.covariates:
        for name, col in _expand_term(t, term, dropped):
            names.append(name)
            cols.append(col)
    X = np.column_stack(cols) if cols else np.empty((t.n_rows, 0))
    return X, tuple(names)


def _categorical_levels_seen(t: DataTable, design: DesignSpec) -> dict[str, frozenset[int]]:
    seen = {}
    for term in design.covariates:
        if isinstance(term, tuple):
            continue
        if t.col_schema(term).kind == "categorical":
            seen[term] = frozenset(int(v) for v in np.unique(t.columns[term]))
    return seen


def _absent_levels(t: DataTable, design: DesignSpec) -> list[tuple[str, str]]:
    absent = []
    for term in design.covariates:
        if isinstance(term, tuple):
            continue
        c = t.col_schema(term)
        if c.kind != "categorical":
            continue
        present = set(np.unique(t.columns[term]).astype(int))
        # only non-reference levels produce dummy columns
        for k, level in enumerate(c.levels[1:], start=1):
            if k not in present:
                absent.append((term, level))
    return absent


def _wls_solve(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    sw = np.sqrt(w)
    beta, _, rank, _ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    if rank < X.shape[1]:
        raise RegressionError("design matrix is rank deficient")
    return beta


def _bernoulli_deviance(X: np.ndarray, y: np.ndarray, w: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    p = np.clip(expit(eta), 1e-15, 1 - 1e-15)
    return float(-2.0 * np.sum(w * (y * np.log(p) + (1 - y) * np.log1p(-p))))


def _prepare_fit(t, design, weights, drop_absent_levels):
    _check_observed(t, [design.response] + design.columns_used())
    if weights is None:
        w = np.ones(t.n_rows)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if len(w) != t.n_rows:
            raise RegressionError("weights length must match the fitting table")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise RegressionError("weights must be positive and finite")
    absent = _absent_levels(t, design)
    if absent and not drop_absent_levels:
        raise DroppedStrataError(absent)
    X, names = build_design_matrix(t, design, tuple(absent))
    if t.n_rows < X.shape[1]:
        raise RegressionError(f"{t.n_rows} rows cannot identify {X.shape[1]} parameters")
    return X, names, w, tuple(absent)


def fit_linear(
    t: DataTable,
    design: DesignSpec,
    weights: np.ndarray | None = None,
    drop_absent_levels: bool = False,
) -> FittedRegression:
    """Weighted least squares; stores unweighted residuals from the fitting rows."""
    X, names, w, dropped = _prepare_fit(t, design, weights, drop_absent_levels)
    y = t.columns[design.response]
    beta = _wls_solve(X, y, w)
    residuals = y - X @ beta
    return FittedRegression(
        design=design,
        link="identity",
        coefficients=beta,
        coef_names=names,
        residuals=residuals,
        weights=w,
        n_fit=t.n_rows,
        fit_row_ids=t.row_ids.copy(),
        dropped_levels=dropped,
        seen_levels=_categorical_levels_seen(t, design),
    )


def fit_logistic(
    t: DataTable,
    design: DesignSpec,
    weights: np.ndarray | None = None,
    drop_absent_levels: bool = False,
    start: np.ndarray | None = None,
    tol: float = IRLS_TOL,
    max_iter: int = IRLS_MAX_ITER,
    on_separation: str = "raise",
) -> FittedRegression:
    """Weighted Bernoulli MLE via IRLS.

    Convergence is max |coefficient change| < tol, or a numerically
    stationary deviance (near-deterministic mechanisms saturate before the
    coefficients stop creeping). A converged fit with large coefficients is
    accepted; a perfectly separating one raises SeparationError unless
    on_separation="saturate", which instead stops at the bounded saturated
    solution and flags it (observation models under very strong mechanisms
    separate routinely, and only their fitted probabilities are consumed).
    """
    X, names, w, dropped = _prepare_fit(t, design, weights, drop_absent_levels)
    y = t.columns[design.response]
    if np.any((y != 0.0) & (y != 1.0)):
        raise RegressionError(f"response {design.response!r} must be binary")
    if start is None or len(start) != X.shape[1]:
        beta = np.zeros(X.shape[1])
    else:
        beta = np.asarray(start, dtype=np.float64).copy()
    converged = False
    separated = False
    n_iter = 0
    dev = _bernoulli_deviance(X, y, w, beta)
    for n_iter in range(1, max_iter + 1):
        eta = X @ beta
        p = expit(eta)
        # the floor only blocks literal 0/0 at float-saturated probabilities;
        # anything larger caps Newton steps and strands separated fits
        var = np.maximum(p * (1.0 - p), 1e-300)
        z = eta + (y - p) / var
        try:
            direction = _wls_solve(X, z, w * var) - beta
        except RegressionError:
            if n_iter == 1:
                raise  # the design itself is collinear
            # saturation emptied the working weights of most rows and the
            # weighted system lost rank; the current iterate is the answer
            if np.max(np.abs(beta)) > SEPARATION_BOUND:
                if on_separation != "saturate":
                    raise SeparationError(beta) from None
                separated = True
            converged = True
            break
        # step halving keeps the deviance monotone; near-deterministic
        # mechanisms otherwise send unguarded Newton steps into orbit
        lam = 1.0
        dev_new = _bernoulli_deviance(X, y, w, beta + direction)
        while dev_new > dev + 1e-12 and lam > 1e-10:
            lam *= 0.5
            dev_new = _bernoulli_deviance(X, y, w, beta + lam * direction)
        beta = beta + lam * direction
        step = lam * np.max(np.abs(direction))
        stalled = abs(dev_new - dev) <= 1e-13 * (abs(dev_new) + 0.1)
        dev = dev_new
        perfect = dev < 1e-3 and np.max(np.abs(beta)) > SEPARATION_BOUND
        if step < tol or stalled or perfect:
            if perfect:
                if on_separation != "saturate":
                    raise SeparationError(beta)
                separated = True
            converged = True
            break
    if not converged:
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            if on_separation != "saturate":
                raise SeparationError(beta)
            separated = True
        else:
            raise NonConvergenceError(beta)
    return FittedRegression(
        design=design,
        link="logit",
        coefficients=beta,
        coef_names=names,
        residuals=np.empty(0),
        weights=w,
        n_fit=t.n_rows,
        fit_row_ids=t.row_ids.copy(),
        dropped_levels=dropped,
        seen_levels=_categorical_levels_seen(t, design),
        n_iter=n_iter,
        separated=separated,
    )


def unseen_level_rows(model: FittedRegression, t: DataTable) -> np.ndarray:
    """Boolean row flags: any categorical design value the fit never saw."""
    flagged = np.zeros(t.n_rows, dtype=bool)
    for col, seen in model.seen_levels.items():
        codes = t.columns[col].astype(int)
        flagged |= ~np.isin(codes, list(seen))
    return flagged


def predict(model: FittedRegression, t: DataTable, unseen: str = "error") -> np.ndarray:
    """Linear predictor (identity) or inverse-logit probabilities (logit).

    unseen: "error" raises UnseenLevelError on levels absent from the fit;
    "zero" lets their dummies contribute nothing (imputation internals only).
    """
    _check_observed(t, model.design.columns_used())
    if unseen == "error":
        for col, seen in model.seen_levels.items():
            codes = t.columns[col].astype(int)
            bad = ~np.isin(codes, list(seen))
            if bad.any():
                levels = t.col_schema(col).levels
                names = sorted({levels[c] for c in np.unique(codes[bad])})
                raise UnseenLevelError(col, names, np.flatnonzero(bad))
    X, names = build_design_matrix(t, model.design, model.dropped_levels)
    if names != model.coef_names:
        raise RegressionError("prediction design does not line up with the fit")
    eta = X @ model.coefficients
    if model.link == "logit":
        return expit(eta)
    return eta


def sample_admissible(
    predicted: np.ndarray,
    residual_pool: np.ndarray,
    threshold: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per row: prediction plus a residual drawn uniformly from the pool
    members keeping the sum at or above the threshold."""
    pool = np.sort(np.asarray(residual_pool, dtype=np.float64))
    if len(pool) == 0:
        raise RegressionError("residual pool is empty")
    predicted = np.asarray(predicted, dtype=np.float64)
    m = len(pool)
    # first pool index whose sum clears the threshold, by bisection on the
    # exact predicate (float addition is monotone, subtraction tricks aren't)
    lo = np.full(predicted.shape, -1, dtype=np.int64)
    hi = np.full(predicted.shape, m, dtype=np.int64)
    while True:
        active = hi - lo > 1
        if not np.any(active):
            break
        mid = (lo + hi) // 2
        ok = predicted + pool[np.clip(mid, 0, m - 1)] >= threshold
        hi = np.where(active & ok, mid, hi)
        lo = np.where(active & ~ok, mid, lo)
    n_admissible = m - hi
    if np.any(n_admissible == 0):
        bad = np.flatnonzero(n_admissible == 0)
        raise EmptyAdmissibleSetError(int(bad[0]), len(bad))
    j = rng.integers(hi, m)
    return predicted + pool[j]


def draw_bernoulli(probabilities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = np.asarray(probabilities, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise RegressionError("probabilities must lie in [0, 1]")
    return (rng.random(p.shape) < p).astype(np.float64)

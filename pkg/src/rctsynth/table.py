"""Typed columnar trial table with per-cell observed masks and temporal roles.

Columns are stored as float64 arrays; categorical cells hold the integer code
of their level (index into the schema's level tuple). Unobserved cells are
NaN-ed out so nothing downstream can read them by accident -- the mask is the
single source of truth for observedness.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("continuous", "binary", "categorical", "count")
ROLES = ("baseline", "treatment", "post_randomization", "outcome", "auxiliary")


class TableError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    role: str
    levels: tuple[str, ...] | None = None
    index: int = 0  # temporal order for post_randomization columns (1-based)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TableError(f"unknown kind {self.kind!r} for column {self.name!r}")
        if self.role not in ROLES:
            raise TableError(f"unknown role {self.role!r} for column {self.name!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise TableError(f"categorical column {self.name!r} needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise TableError(f"duplicate levels in column {self.name!r}")
        if self.role == "post_randomization" and self.index < 1:
            raise TableError(f"post_randomization column {self.name!r} needs index >= 1")


def validate_schema(schema: tuple[ColumnSchema, ...], trial: bool = False) -> None:
    """Structural checks; trial=True additionally demands the full trial layout
    (exactly one treatment and one outcome column)."""
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise TableError("duplicate column names in schema")
    n_treat = sum(c.role == "treatment" for c in schema)
    n_out = sum(c.role == "outcome" for c in schema)
    if n_treat > 1 or n_out > 1:
        raise TableError("schema allows at most one treatment and one outcome column")
    if trial and (n_treat != 1 or n_out != 1):
        raise TableError("schema needs exactly one treatment and one outcome column")
    post = sorted(c.index for c in schema if c.role == "post_randomization")
    if post != list(range(1, len(post) + 1)):
        raise TableError("post_randomization indices must be a contiguous 1..K sequence")


@dataclass(frozen=True)
class StandardizationParams:
    """Per-column (mean, sample sd) used to undo a standardization."""

    moments: dict[str, tuple[float, float]]


@dataclass(frozen=True)
class DataTable:
    schema: tuple[ColumnSchema, ...]
    columns: dict[str, np.ndarray]
    mask: dict[str, np.ndarray]
    row_ids: np.ndarray = field(default=None)  # original row indices, for joinability

    def __post_init__(self):
        validate_schema(self.schema)
        n = self.n_rows
        for c in self.schema:
            col = self.columns[c.name]
            m = self.mask[c.name]
            if len(col) != n or len(m) != n:
                raise TableError(f"column {c.name!r} length mismatch")
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(n, dtype=np.int64))
        elif len(self.row_ids) != n:
            raise TableError("row_ids length mismatch")

    @property
    def n_rows(self) -> int:
        first = self.schema[0].name
        return len(self.columns[first])

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def col_schema(self, name: str) -> ColumnSchema:
        for c in self.schema:
            if c.name == name:
                return c
        raise TableError(f"unknown column {name!r}")

    def values(self, name: str) -> np.ndarray:
        self.col_schema(name)
        return self.columns[name]

    def observed(self, name: str) -> np.ndarray:
        """Observed values of one column (mask applied)."""
        return self.columns[name][self.mask[name]]

    def baseline_names(self) -> list[str]:
        return [c.name for c in self.schema if c.role == "baseline"]

    def treatment_name(self) -> str:
        for c in self.schema:
            if c.role == "treatment":
                return c.name
        raise TableError("table has no treatment column")

    def outcome_name(self) -> str:
        for c in self.schema:
            if c.role == "outcome":
                return c.name
        raise TableError("table has no outcome column")

    def post_randomization_names(self) -> list[str]:
        post = [c for c in self.schema if c.role == "post_randomization"]
        return [c.name for c in sorted(post, key=lambda c: c.index)]

    def temporal_names(self) -> list[str]:
        """Post-randomization columns then the outcome, in trial order."""
        return self.post_randomization_names() + [self.outcome_name()]

    def take(self, rows: np.ndarray) -> DataTable:
        cols = {n: self.columns[n][rows] for n in self.columns}
        mask = {n: self.mask[n][rows] for n in self.mask}
        return DataTable(self.schema, cols, mask, self.row_ids[rows])

    def with_column(
        self,
        name: str,
        values: np.ndarray,
        kind: str = "binary",
        role: str = "auxiliary",
        levels: tuple[str, ...] | None = None,
        index: int = 0,
        mask: np.ndarray | None = None,
    ) -> DataTable:
        """New table with one extra column appended (fully observed unless a
        mask is given)."""
        if name in self.columns:
            raise TableError(f"column {name!r} already exists")
        schema = self.schema + (ColumnSchema(name, kind, role, levels, index),)
        cols = dict(self.columns)
        cols[name] = np.asarray(values, dtype=np.float64)
        masks = dict(self.mask)
        if mask is None:
            masks[name] = np.ones(self.n_rows, dtype=bool)
        else:
            masks[name] = np.asarray(mask, dtype=bool)
        return DataTable(schema, _null_unobserved(cols, masks, schema), masks, self.row_ids)

    def replace_column(self, name: str, values: np.ndarray, mask: np.ndarray | None = None) -> DataTable:
        self.col_schema(name)
        cols = dict(self.columns)
        cols[name] = np.asarray(values, dtype=np.float64)
        masks = dict(self.mask)
        if mask is not None:
            masks[name] = np.asarray(mask, dtype=bool)
        return DataTable(self.schema, _null_unobserved(cols, masks, self.schema), masks, self.row_ids)

    def with_masks(self, new_masks: dict[str, np.ndarray]) -> DataTable:
        """Apply tighter masks (can only hide cells, never reveal them)."""
        masks = dict(self.mask)
        for name, m in new_masks.items():
            m = np.asarray(m, dtype=bool)
            if np.any(m & ~self.mask[name]):
                raise TableError(f"mask for {name!r} would reveal unobserved cells")
            masks[name] = m
        cols = _null_unobserved(dict(self.columns), masks, self.schema)
        return DataTable(self.schema, cols, masks, self.row_ids)

    def all_observed(self) -> bool:
        return all(bool(m.all()) for m in self.mask.values())


def _null_unobserved(cols, masks, schema):
    for c in schema:
        m = masks[c.name]
        if not m.all():
            v = cols[c.name].copy()
            v[~m] = np.nan
            cols[c.name] = v
    return cols


def make_table(
    schema: tuple[ColumnSchema, ...],
    columns: dict[str, np.ndarray],
    mask: dict[str, np.ndarray] | None = None,
    row_ids: np.ndarray | None = None,
) -> DataTable:
    """Construct a DataTable, NaN-ing out whatever the mask hides."""
    cols = {n: np.asarray(v, dtype=np.float64) for n, v in columns.items()}
    n = len(next(iter(cols.values())))
    if mask is None:
        mask = {c.name: np.ones(n, dtype=bool) for c in schema}
    else:
        mask = {k: np.asarray(v, dtype=bool) for k, v in mask.items()}
        for c in schema:
            mask.setdefault(c.name, np.ones(n, dtype=bool))
    cols = _null_unobserved(cols, mask, schema)
    if row_ids is None:
        row_ids = np.arange(n, dtype=np.int64)
    return DataTable(tuple(schema), cols, mask, np.asarray(row_ids, dtype=np.int64))


def tables_equal(a: DataTable, b: DataTable) -> bool:
    """Bit-exact equality on masks and observed values."""
    if a.schema != b.schema or a.n_rows != b.n_rows:
        return False
    for c in a.schema:
        if not np.array_equal(a.mask[c.name], b.mask[c.name]):
            return False
        m = a.mask[c.name]
        if not np.array_equal(a.columns[c.name][m], b.columns[c.name][m]):
            return False
    return True


# ---------------------------------------------------------------------------
# parsing / formatting


def _parse_cell(token: str, col: ColumnSchema, missing_token: str, where: str):
    if token == missing_token or token == "":
        return np.nan, False
    if col.kind == "categorical":
        try:
            return float(col.levels.index(token)), True
        except ValueError:
            raise TableError(f"{where}: {token!r} is not a level of {col.name!r}") from None
    try:
        v = float(token)
    except ValueError:
        raise TableError(f"{where}: cannot parse {token!r} as {col.kind}") from None
    if col.kind == "binary" and v not in (0.0, 1.0):
        raise TableError(f"{where}: binary column {col.name!r} got {token!r}")
    return v, True


def _format_cell(v: float, observed: bool, col: ColumnSchema, missing_token: str) -> str:
    if not observed:
        return missing_token
    if col.kind == "categorical":
        return col.levels[int(v)]
    if col.kind == "binary":
        return str(int(v))
    return repr(float(v))


def load_csv(path: str | Path, schema: tuple[ColumnSchema, ...], missing_token: str = "NA") -> DataTable:
    """Read a CSV against a declared schema.

    Unobserved cells must carry the missing token (empty cells also count);
    a missing baseline or treatment cell is a hard error because everything
    upstream of the first follow-up is assumed fully observed.
    """
    schema = tuple(schema)
    validate_schema(schema, trial=True)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file, expected a header row") from None
        if header != [c.name for c in schema]:
            raise TableError(f"{path}: header {header} does not match schema")
        cols = {c.name: [] for c in schema}
        masks = {c.name: [] for c in schema}
        for i, row in enumerate(reader):
            if len(row) != len(schema):
                raise TableError(f"{path} row {i}: expected {len(schema)} cells, got {len(row)}")
            for c, token in zip(schema, row):
                v, obs = _parse_cell(token, c, missing_token, f"{path} row {i} column {c.name!r}")
                if not obs and c.role in ("baseline", "treatment"):
                    raise TableError(
                        f"{path} row {i}: missing value in {c.role} column {c.name!r}"
                    )
                cols[c.name].append(v)
                masks[c.name].append(obs)
    columns = {n: np.asarray(v, dtype=np.float64) for n, v in cols.items()}
    mask = {n: np.asarray(v, dtype=bool) for n, v in masks.items()}
    return DataTable(schema, columns, mask)


def write_csv(t: DataTable, path: str | Path, missing_token: str = "NA") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(t.names)
        for i in range(t.n_rows):
            writer.writerow(
                _format_cell(t.columns[c.name][i], t.mask[c.name][i], c, missing_token)
                for c in t.schema
            )


def schema_from_json(obj: list[dict]) -> tuple[ColumnSchema, ...]:
    cols = []
    for d in obj:
        cols.append(
            ColumnSchema(
                name=d["name"],
                kind=d["kind"],
                role=d["role"],
                levels=tuple(d["levels"]) if d.get("levels") else None,
                index=int(d.get("index", 0)),
            )
        )
    schema = tuple(cols)
    validate_schema(schema, trial=True)
    return schema


def schema_to_json(schema: tuple[ColumnSchema, ...]) -> list[dict]:
    out = []
    for c in schema:
        d = {"name": c.name, "kind": c.kind, "role": c.role}
        if c.levels:
            d["levels"] = list(c.levels)
        if c.index:
            d["index"] = c.index
        out.append(d)
    return out


def load_schema(path: str | Path) -> tuple[ColumnSchema, ...]:
    with open(path, encoding="utf-8") as fh:
        return schema_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# derived views


def complete_cases(t: DataTable) -> DataTable:
    keep = np.ones(t.n_rows, dtype=bool)
    for m in t.mask.values():
        keep &= m
    return t.take(np.flatnonzero(keep))


def observed_subset(t: DataTable, required: list[str]) -> DataTable:
    keep = np.ones(t.n_rows, dtype=bool)
    for name in required:
        t.col_schema(name)
        keep &= t.mask[name]
    return t.take(np.flatnonzero(keep))


def is_monotone(t: DataTable) -> bool:
    """Missing at follow-up k implies missing at every later stage (and outcome)."""
    order = t.temporal_names()
    missing_before = np.zeros(t.n_rows, dtype=bool)
    for name in order:
        if np.any(missing_before & t.mask[name]):
            return False
        missing_before |= ~t.mask[name]
    return True


def standardize(t: DataTable, columns: list[str]) -> tuple[DataTable, StandardizationParams]:
    """Center/scale observed values of continuous columns to mean 0, sample sd 1."""
    moments = {}
    new_cols = dict(t.columns)
    for name in columns:
        c = t.col_schema(name)
        if c.kind not in ("continuous", "count"):
            raise TableError(f"cannot standardize non-continuous column {name!r}")
        vals = t.observed(name)
        if len(vals) < 2:
            raise TableError(f"column {name!r} has fewer than 2 observed values")
        mu = float(np.mean(vals))
        sd = float(np.std(vals, ddof=1))
        if sd == 0.0:
            raise TableError(f"column {name!r} has zero variance")
        moments[name] = (mu, sd)
        new_cols[name] = (t.columns[name] - mu) / sd
    out = DataTable(t.schema, _null_unobserved(new_cols, dict(t.mask), t.schema), dict(t.mask), t.row_ids)
    return out, StandardizationParams(moments)


def inverse_standardize(t: DataTable, params: StandardizationParams) -> DataTable:
    new_cols = dict(t.columns)
    for name, (mu, sd) in params.moments.items():
        new_cols[name] = t.columns[name] * sd + mu
    return DataTable(t.schema, _null_unobserved(new_cols, dict(t.mask), t.schema), dict(t.mask), t.row_ids)


def dichotomize_treatment(t: DataTable, baseline_arm: str) -> DataTable:
    """Collapse the treatment arms to {baseline_arm} vs pooled others.

    Post-processing for the trial-inference metric only; run it on generated
    output, never before generation.
    """
    name = t.treatment_name()
    c = t.col_schema(name)
    if c.kind != "categorical":
        return t  # already binary
    if baseline_arm not in c.levels:
        raise TableError(f"{baseline_arm!r} is not a level of {name!r}")
    ref = c.levels.index(baseline_arm)
    values = (t.columns[name] != ref).astype(np.float64)
    schema = tuple(
        ColumnSchema(name, "binary", "treatment") if s.name == name else s for s in t.schema
    )
    cols = dict(t.columns)
    cols[name] = values
    return DataTable(schema, _null_unobserved(cols, dict(t.mask), schema), dict(t.mask), t.row_ids)

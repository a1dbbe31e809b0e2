"""Columnar trial tables: ingestion, roles, binarization, subsampling.

A ``Dataset`` is an immutable bundle of equal-length numpy columns with a
role attached to each column (treatment, outcome, covariate, ...).  Three
table kinds exist:

* ``rct``            -- one treatment column, one observed outcome
* ``apo``            -- one potential-outcome column per treatment level,
                        no observed outcome (treatment column is a
                        placeholder until a sampler fills it)
* ``observational``  -- output of a biased sampler, same shape as ``rct``

Categorical columns are dictionary-encoded: int64 codes in first-appearance
order, level strings kept in ``Dataset.levels``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDataset,
    InvalidSchema,
    MissingColumn,
    MissingValue,
    SampleTooLarge,
    TypeParseError,
    UnmappedLevel,
)

RCT = "rct"
APO = "apo"
OBSERVATIONAL = "observational"
TABLE_KINDS = (RCT, APO, OBSERVATIONAL)

ROLE_UNIT_ID = "unit_id"
ROLE_TREATMENT = "treatment"
ROLE_OUTCOME = "outcome"
ROLE_COVARIATE = "covariate"
ROLE_POTENTIAL_OUTCOME = "potential_outcome"
ROLE_WEIGHT = "weight"

MISSING_TOKENS = {"", "NA", "NaN", "nan"}


@dataclass(frozen=True)
class ColumnRole:
    """Role annotation for one column.

    ``level`` is only meaningful for potential-outcome columns, where it
    names the treatment level the column records.
    """

    kind: str
    level: int | None = None

    def __post_init__(self):
        valid = {
            ROLE_UNIT_ID,
            ROLE_TREATMENT,
            ROLE_OUTCOME,
            ROLE_COVARIATE,
            ROLE_POTENTIAL_OUTCOME,
            ROLE_WEIGHT,
        }
        if self.kind not in valid:
            raise InvalidSchema(f"unknown role kind {self.kind!r}")
        if self.kind == ROLE_POTENTIAL_OUTCOME and self.level not in (0, 1):
            raise InvalidSchema("potential_outcome role needs level 0 or 1")

    @classmethod
    def parse(cls, text: str) -> "ColumnRole":
        """Parse a role string such as ``"covariate"`` or ``"potential_outcome:1"``."""
        if ":" in text:
            kind, level = text.split(":", 1)
            return cls(kind, int(level))
        return cls(text)

    def __str__(self) -> str:
        if self.level is None:
            return self.kind
        return f"{self.kind}:{self.level}"


@dataclass(frozen=True)
class SchemaConfig:
    """Column roles plus parsing options for one table.

    ``treatment_levels`` optionally maps raw treatment levels to 0, 1 or
    ``"drop"`` and is applied by :func:`binarize_treatment`.
    ``missing_policy`` is ``"reject"`` (default) or ``"drop_rows"``.
    """

    roles: dict[str, ColumnRole]
    table_kind: str = RCT
    treatment_levels: dict[str, object] | None = None
    categorical: tuple[str, ...] = ()
    missing_policy: str = "reject"

    def __post_init__(self):
        if self.table_kind not in TABLE_KINDS:
            raise InvalidSchema(f"unknown table kind {self.table_kind!r}")
        if self.missing_policy not in ("reject", "drop_rows"):
            raise InvalidSchema(f"unknown missing policy {self.missing_policy!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SchemaConfig":
        roles = {name: ColumnRole.parse(r) for name, r in doc["roles"].items()}
        return cls(
            roles=roles,
            table_kind=doc.get("table_kind", RCT),
            treatment_levels=doc.get("treatment_levels"),
            categorical=tuple(doc.get("categorical", ())),
            missing_policy=doc.get("missing_policy", "reject"),
        )


def _check_roles(roles: dict[str, ColumnRole], table_kind: str) -> None:
    kinds: dict[str, list[str]] = {}
    for name, role in roles.items():
        kinds.setdefault(role.kind, []).append(name)
    if len(kinds.get(ROLE_TREATMENT, [])) != 1:
        raise InvalidSchema("exactly one treatment column is required")
    n_outcome = len(kinds.get(ROLE_OUTCOME, []))
    po_levels = sorted(roles[n].level for n in kinds.get(ROLE_POTENTIAL_OUTCOME, []))
    if table_kind == APO:
        if n_outcome:
            raise InvalidSchema("apo tables carry no observed outcome column")
        if po_levels != [0, 1]:
            raise InvalidSchema("apo tables need potential_outcome:0 and potential_outcome:1")
    else:
        if n_outcome != 1:
            raise InvalidSchema(f"{table_kind} tables need exactly one outcome column")
        if po_levels:
            raise InvalidSchema(f"{table_kind} tables carry no potential-outcome columns")
    if len(kinds.get(ROLE_WEIGHT, [])) > 1:
        raise InvalidSchema("at most one weight column")


@dataclass(frozen=True)
class Dataset:
    """Immutable columnar table with per-column roles.

    ``levels`` holds the dictionary encoding of categorical columns
    (codes index into the level tuple).  ``n_dropped_rows`` counts rows
    removed by the ``drop_rows`` missing-value policy at ingestion.
    """

    columns: dict[str, np.ndarray]
    roles: dict[str, ColumnRole]
    table_kind: str
    levels: dict[str, tuple[str, ...]] = field(default_factory=dict)
    n_dropped_rows: int = 0

    def __post_init__(self):
        if set(self.columns) != set(self.roles):
            raise InvalidSchema("columns and roles name different sets")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise InvalidSchema(f"ragged columns: lengths {sorted(lengths)}")
        _check_roles(self.roles, self.table_kind)
        for arr in self.columns.values():
            arr.flags.writeable = False

    # -- accessors ------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def _names_with(self, kind: str) -> list[str]:
        return [n for n, r in self.roles.items() if r.kind == kind]

    @property
    def treatment_name(self) -> str:
        return self._names_with(ROLE_TREATMENT)[0]

    @property
    def outcome_name(self) -> str:
        names = self._names_with(ROLE_OUTCOME)
        if not names:
            raise InvalidSchema("table has no observed outcome column")
        return names[0]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(self._names_with(ROLE_COVARIATE))

    @property
    def weight_name(self) -> str | None:
        names = self._names_with(ROLE_WEIGHT)
        return names[0] if names else None

    def potential_outcome_name(self, level: int) -> str:
        for n, r in self.roles.items():
            if r.kind == ROLE_POTENTIAL_OUTCOME and r.level == level:
                return n
        raise InvalidSchema(f"no potential_outcome:{level} column")

    def values(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise MissingColumn(name)
        return self.columns[name]

    @property
    def treatment(self) -> np.ndarray:
        return self.columns[self.treatment_name]

    @property
    def outcome(self) -> np.ndarray:
        return self.columns[self.outcome_name]

    def treatment_is_binary(self) -> bool:
        t = self.treatment
        if self.treatment_name in self.levels:
            return False
        return bool(np.isin(t, (0, 1)).all())

    def is_categorical(self, name: str) -> bool:
        return name in self.levels

    # -- derived tables ---------------------------------------------------

    def take_rows(self, idx: np.ndarray) -> "Dataset":
        cols = {n: np.ascontiguousarray(v[idx]) for n, v in self.columns.items()}
        return replace(self, columns=cols)

    def with_columns(self, new: dict[str, np.ndarray], roles: dict[str, ColumnRole],
                     drop: tuple[str, ...] = (), table_kind: str | None = None) -> "Dataset":
        cols = {n: v for n, v in self.columns.items() if n not in drop}
        rls = {n: r for n, r in self.roles.items() if n not in drop}
        cols.update(new)
        rls.update(roles)
        lv = {n: l for n, l in self.levels.items() if n in cols and n not in new}
        return Dataset(cols, rls, table_kind or self.table_kind, lv, self.n_dropped_rows)

    def equals(self, other: "Dataset") -> bool:
        """Cell-exact equality, including roles and level encodings."""
        if set(self.columns) != set(other.columns) or self.table_kind != other.table_kind:
            return False
        if self.roles != other.roles or self.levels != other.levels:
            return False
        return all(np.array_equal(self.columns[n], other.columns[n]) for n in self.columns)


# -- ingestion ---------------------------------------------------------------


def dictionary_encode(values: list[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Encode strings as int64 codes, levels numbered in first-appearance order."""
    levels: list[str] = []
    index: dict[str, int] = {}
    codes = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        if v not in index:
            index[v] = len(levels)
            levels.append(v)
        codes[i] = index[v]
    return codes, tuple(levels)


def _parse_column(name: str, raw: list[str], role: ColumnRole, force_categorical: bool):
    """Return (array, levels-or-None) for one fully present column."""
    must_be_numeric = role.kind in (ROLE_OUTCOME, ROLE_POTENTIAL_OUTCOME, ROLE_WEIGHT)
    if role.kind == ROLE_TREATMENT and not force_categorical:
        try:
            return np.array([int(v) for v in raw], dtype=np.int64), None
        except ValueError:
            pass  # fall through to float / categorical
    if not force_categorical:
        try:
            return np.array([float(v) for v in raw], dtype=np.float64), None
        except ValueError as exc:
            if must_be_numeric:
                bad = next(i for i, v in enumerate(raw) if not _is_float(v))
                raise TypeParseError(bad, name, raw[bad]) from exc
    elif must_be_numeric:
        raise InvalidSchema(f"column {name!r} with role {role.kind} cannot be categorical")
    codes, levels = dictionary_encode(raw)
    return codes, levels


def _is_float(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


def load_table(path: str | Path, schema: SchemaConfig) -> Dataset:
    """Load a CSV into a :class:`Dataset` under ``schema``.

    Only role-assigned columns are ingested.  Raises ``MissingColumn`` when
    a declared name is absent from the header, ``MissingValue`` for blank
    cells under the ``reject`` policy, ``TypeParseError`` for non-numeric
    cells in outcome/weight columns.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(str(path)) from None
        rows = list(reader)

    for name in schema.roles:
        if name not in header:
            raise MissingColumn(name)
    col_idx = {name: header.index(name) for name in schema.roles}

    keep: list[list[str]] = []
    n_dropped = 0
    for i, row in enumerate(rows):
        missing = [n for n, j in col_idx.items() if j >= len(row) or row[j] in MISSING_TOKENS]
        if missing:
            if schema.missing_policy == "reject":
                raise MissingValue(i, missing[0])
            n_dropped += 1
            continue
        keep.append(row)

    columns: dict[str, np.ndarray] = {}
    levels: dict[str, tuple[str, ...]] = {}
    for name, j in col_idx.items():
        raw = [row[j] for row in keep]
        arr, lv = _parse_column(name, raw, schema.roles[name], name in schema.categorical)
        columns[name] = arr
        if lv is not None:
            levels[name] = lv

    return Dataset(columns, dict(schema.roles), schema.table_kind, levels, n_dropped)


def write_csv(d: Dataset, path: str | Path) -> None:
    """Write a dataset back to CSV; categorical codes are expanded to level strings."""
    names = list(d.columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        decoded = []
        for n in names:
            v = d.columns[n]
            if n in d.levels:
                lv = d.levels[n]
                decoded.append([lv[c] for c in v])
            elif v.dtype.kind == "f":
                decoded.append([repr(float(x)) for x in v])
            else:
                decoded.append([str(int(x)) for x in v])
        for i in range(d.n_rows):
            writer.writerow([col[i] for col in decoded])


# -- operations ----------------------------------------------------------------


def binarize_treatment(d: Dataset, rule: dict[object, object]) -> Dataset:
    """Map raw treatment levels through ``rule`` (values 0, 1 or ``"drop"``).

    Rows mapping to ``"drop"`` are removed; every other column is untouched
    on surviving rows.  Raises ``UnmappedLevel`` for observed levels the
    rule does not cover.
    """
    tname = d.treatment_name
    t = d.values(tname)
    if tname in d.levels:
        observed = [d.levels[tname][c] for c in t]
    else:
        # numeric treatments: match rule keys by numeric value
        observed = list(t)
        rule = {float(k): v for k, v in rule.items()}
        observed = [float(v) for v in observed]

    mapped = np.empty(len(observed), dtype=np.int64)
    keep = np.ones(len(observed), dtype=bool)
    for i, lev in enumerate(observed):
        if lev not in rule:
            raise UnmappedLevel(str(lev))
        v = rule[lev]
        if v == "drop":
            keep[i] = False
        elif v in (0, 1):
            mapped[i] = int(v)
        else:
            raise InvalidSchema(f"treatment rule value {v!r} is not 0, 1 or 'drop'")

    cols = {n: np.ascontiguousarray(v[keep]) for n, v in d.columns.items()}
    cols[tname] = np.ascontiguousarray(mapped[keep])
    levels = {n: l for n, l in d.levels.items() if n != tname}
    return Dataset(cols, dict(d.roles), d.table_kind, levels, d.n_dropped_rows)


def subsample_uniform(d: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    """Draw ``n`` rows uniformly without replacement, kept in source row order."""
    if n > d.n_rows:
        raise SampleTooLarge(f"requested {n} of {d.n_rows} rows")
    idx = np.sort(rng.choice(d.n_rows, size=n, replace=False))
    return d.take_rows(idx)


@dataclass(frozen=True)
class OutcomeSpan:
    """Outcome range used for error normalization.

    ``binary`` outcomes (values within {0,1}) report span 1 by definition.
    ``degenerate`` marks a constant non-binary outcome (span 0); normalized
    errors are undefined there.
    """

    value: float
    binary: bool
    degenerate: bool


def encode_covariates(d: Dataset, names: tuple[str, ...] | None = None) -> tuple[np.ndarray, list[str]]:
    """Numeric design block over the given covariates (no intercept column).

    Numeric columns pass through; categorical columns expand to one
    indicator per level beyond the first (first-appearance level is the
    reference).  Returns the (n, p) matrix and the feature names.
    """
    if names is None:
        names = d.covariate_names
    blocks: list[np.ndarray] = []
    feature_names: list[str] = []
    for n in names:
        if n not in d.columns:
            raise MissingColumn(n)
        v = d.values(n)
        if d.is_categorical(n):
            for code, level in enumerate(d.levels[n]):
                if code == 0:
                    continue
                blocks.append((v == code).astype(np.float64))
                feature_names.append(f"{n}={level}")
        else:
            blocks.append(v.astype(np.float64))
            feature_names.append(n)
    if not blocks:
        return np.empty((d.n_rows, 0)), []
    return np.column_stack(blocks), feature_names


def outcome_range(d: Dataset) -> OutcomeSpan:
    """Span (max - min) over all outcome and potential-outcome values."""
    vals = [v for n, v in d.columns.items()
            if d.roles[n].kind in (ROLE_OUTCOME, ROLE_POTENTIAL_OUTCOME)]
    if not vals or d.n_rows == 0:
        raise EmptyDataset("no outcome values")
    y = np.concatenate(vals)
    if np.isin(y, (0.0, 1.0)).all():
        return OutcomeSpan(1.0, binary=True, degenerate=False)
    span = float(y.max() - y.min())
    if not math.isfinite(span):
        raise EmptyDataset("non-finite outcome values")
    return OutcomeSpan(span, binary=False, degenerate=span == 0.0)

"""
Observational data containers with causal roles.

A :class:`Dataset` is an immutable table of named numeric columns. A
:class:`RoleSpec` says which column plays which part (exposure, outcome,
mediators, intermediate confounders, baseline covariates), and a
:class:`ReferencePoint` fixes the baseline-covariate values at which
conditional disparities are evaluated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, BINARY, CATEGORICAL)


class DataError(ValueError):
    """Base class for problems with input data."""


class SchemaError(DataError):
    """A required column is missing or roles overlap."""


class ParseError(DataError):
    """A cell could not be read as a number."""


class ValidationError(DataError):
    """Data violate a role constraint (missing values, non-binary codes, ...)."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variable kind {self.kind!r} for {self.name!r}")

    @classmethod
    def coerce(cls, obj) -> "Variable":
        if isinstance(obj, Variable):
            return obj
        if isinstance(obj, str):
            name, _, kind = obj.partition(":")
            return cls(name, kind or CONTINUOUS)
        name, kind = obj
        return cls(name, kind)

    @property
    def is_binary(self) -> bool:
        return self.kind in (BINARY, CATEGORICAL)


def _variables(items) -> tuple[Variable, ...]:
    if items is None:
        return ()
    if isinstance(items, (str, Variable)):
        items = [items]
    return tuple(Variable.coerce(v) for v in items)


@dataclass(frozen=True)
class RoleSpec:
    """Causal roles of the columns of a dataset.

    Variables may be given as :class:`Variable`, ``(name, kind)`` pairs or
    ``"name:kind"`` strings; a bare name means continuous. The exposure is
    always binary: 1 marks the comparison group, 0 the reference group.
    """

    exposure: str
    outcome: Variable
    mediators: tuple[Variable, ...]
    intermediate_confounders: tuple[Variable, ...] = ()
    baseline_covariates: tuple[Variable, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "outcome", Variable.coerce(self.outcome))
        object.__setattr__(self, "mediators", _variables(self.mediators))
        object.__setattr__(self, "intermediate_confounders",
                           _variables(self.intermediate_confounders))
        object.__setattr__(self, "baseline_covariates",
                           _variables(self.baseline_covariates))
        if not self.mediators:
            raise SchemaError("at least one mediator is required")
        if self.outcome.kind == CATEGORICAL:
            object.__setattr__(self, "outcome", Variable(self.outcome.name, BINARY))
        names = self.column_names
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"columns assigned to more than one role: {dupes}")

    @property
    def column_names(self) -> list[str]:
        return ([self.exposure, self.outcome.name]
                + [v.name for v in self.mediators]
                + [v.name for v in self.intermediate_confounders]
                + [v.name for v in self.baseline_covariates])

    @property
    def mediator(self) -> Variable:
        """The single mediator (raises if several are declared)."""
        if len(self.mediators) != 1:
            raise SchemaError("this operation needs exactly one mediator")
        return self.mediators[0]

    def binary_columns(self) -> list[str]:
        cols = [self.exposure]
        for v in (self.outcome, *self.mediators, *self.intermediate_confounders):
            if v.kind == BINARY:
                cols.append(v.name)
        return cols


class Dataset:
    """Immutable rectangular table of numeric columns.

    Columns are stored as read-only float64 arrays. Construction through
    :meth:`from_columns` with ``validate=True`` rejects ragged input and
    missing values; internal callers that already hold clean arrays may skip
    the check.
    """

    __slots__ = ("_columns", "n_rows")

    def __init__(self, columns: Mapping[str, np.ndarray], n_rows: int):
        for arr in columns.values():
            arr.setflags(write=False)
        self._columns = MappingProxyType(dict(columns))
        self.n_rows = n_rows

    def __reduce__(self):
        return (Dataset, (dict(self._columns), self.n_rows))

    @classmethod
    def from_columns(cls, columns: Mapping[str, Iterable[float]],
                     validate: bool = True) -> "Dataset":
        cols = {}
        n = None
        for name, values in columns.items():
            arr = np.array(values, dtype=float)
            if arr.ndim != 1:
                raise ValidationError(f"column {name!r} is not one-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise ValidationError(
                    f"column {name!r} has {arr.shape[0]} rows, expected {n}")
            if validate and not np.all(np.isfinite(arr)):
                row = int(np.flatnonzero(~np.isfinite(arr))[0]) + 1
                raise ValidationError(f"missing or non-finite value in row {row}, column {name!r}")
            arr.setflags(write=False)
            cols[name] = arr
        if n is None or n < 1:
            raise ValidationError("a dataset needs at least one row and one column")
        return cls(cols, n)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise SchemaError(f"no column named {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._columns

    def __len__(self) -> int:
        return self.n_rows

    def __repr__(self) -> str:
        return f"Dataset(n_rows={self.n_rows}, columns={list(self._columns)})"

    @property
    def columns(self) -> Mapping[str, np.ndarray]:
        return self._columns

    @property
    def column_names(self) -> list[str]:
        return list(self._columns)

    def take(self, index) -> "Dataset":
        """Rows selected by an integer index array or boolean mask."""
        index = np.asarray(index)
        cols = {k: v[index] for k, v in self._columns.items()}
        n = int(index.sum()) if index.dtype == bool else len(index)
        return Dataset(cols, n)

    def with_columns(self, **columns) -> "Dataset":
        cols = dict(self._columns)
        for k, v in columns.items():
            arr = np.broadcast_to(np.asarray(v, dtype=float), (self.n_rows,)).copy()
            arr.setflags(write=False)
            cols[k] = arr
        return Dataset(cols, self.n_rows)

    def to_csv(self, path) -> None:
        """Write with 17 significant digits so values round-trip exactly."""
        names = self.column_names
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            cols = [self._columns[k] for k in names]
            for i in range(self.n_rows):
                writer.writerow(["%.17g" % c[i] for c in cols])


@dataclass(frozen=True)
class ReferencePoint:
    """Baseline-covariate values ``C = c`` at which disparities are evaluated."""

    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values",
                           MappingProxyType({k: float(v) for k, v in dict(self.values).items()}))

    def __getitem__(self, name):
        return self.values[name]

    def __reduce__(self):
        return (ReferencePoint, (dict(self.values),))

    def to_dict(self) -> dict[str, float]:
        return dict(self.values)


def validate(data: Dataset, spec: RoleSpec) -> Dataset:
    """Check that ``data`` satisfies the role constraints in ``spec``."""
    missing = [c for c in spec.column_names if c not in data]
    if missing:
        raise SchemaError(f"missing columns: {missing}")
    for name in spec.column_names:
        col = data[name]
        bad = ~np.isfinite(col)
        if bad.any():
            row = int(np.flatnonzero(bad)[0]) + 1
            raise ValidationError(f"missing value in row {row}, column {name!r}")
    r = data[spec.exposure]
    if not np.all((r == 0) | (r == 1)):
        raise ValidationError("exposure must be binary 0/1")
    if r.min() == r.max():
        raise ValidationError("exposure must contain both 0 and 1")
    for name in spec.binary_columns()[1:]:
        col = data[name]
        if not np.all((col == 0) | (col == 1)):
            raise ValidationError(f"binary column {name!r} must be coded 0/1")
    return data


def load_csv(path, role_spec: RoleSpec) -> Dataset:
    """Read the role columns of a CSV file into a validated :class:`Dataset`.

    Columns not named in ``role_spec`` are ignored. Empty cells are rejected
    rather than imputed.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        wanted = role_spec.column_names
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        pos = {c: header.index(c) for c in wanted}
        values = {c: [] for c in wanted}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            for c, j in pos.items():
                cell = row[j].strip() if j < len(row) else ""
                if cell == "" or cell.upper() in ("NA", "NAN"):
                    raise ValidationError(
                        f"{path}: missing value in row {lineno}, column {c!r}")
                try:
                    values[c].append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric value {cell!r} in row {lineno}, column {c!r}") from None
    if not values[wanted[0]]:
        raise ValidationError(f"{path}: no data rows")
    return validate(Dataset.from_columns(values), role_spec)


def level_label(name: str, level: float) -> str:
    """Name of the indicator column for ``name == level``."""
    if float(level).is_integer():
        return f"{name}[{int(level)}]"
    return f"{name}[{level!r}]"


def covariate_columns(data: Dataset, spec: RoleSpec, drop_constant: bool = False) -> list[str]:
    """Design columns standing for the baseline covariates of ``spec``.

    After :func:`center_covariates` a categorical covariate is represented by
    its indicator columns; otherwise the column keeps its own name. With
    ``drop_constant`` columns without variation are skipped, since they carry
    no information and would make the design singular.
    """
    names = []
    all_cols = data.column_names
    for v in spec.baseline_covariates:
        if v.name in data:
            cols = [v.name]
        else:
            prefix = v.name + "["
            cols = [c for c in all_cols if c.startswith(prefix)]
        for c in cols:
            if drop_constant:
                x = data[c]
                if x.max() == x.min():
                    continue
            names.append(c)
    return names


def default_reference(data: Dataset, spec: RoleSpec) -> ReferencePoint:
    """Sample mean for continuous covariates, most frequent level otherwise."""
    values = {}
    for v in spec.baseline_covariates:
        x = data[v.name]
        if v.kind == CONTINUOUS:
            values[v.name] = float(np.mean(x))
        else:
            levels, counts = np.unique(x, return_counts=True)
            values[v.name] = float(levels[np.argmax(counts)])
    return ReferencePoint(values)


def center_covariates(data: Dataset, spec: RoleSpec, ref: ReferencePoint) -> Dataset:
    """Re-express baseline covariates relative to the reference point.

    Continuous covariates become ``value - c``; categorical (and binary)
    covariates are replaced by indicator columns for every level other than
    the reference one. Model intercepts fitted on the result are conditional
    means at ``C = c``.
    """
    missing = [v.name for v in spec.baseline_covariates if v.name not in ref.values]
    extra = set(ref.values) - {v.name for v in spec.baseline_covariates}
    if missing or extra:
        raise ValueError(f"reference point must cover exactly the baseline covariates "
                         f"(missing {missing}, unexpected {sorted(extra)})")
    cols = dict(data.columns)
    for v in spec.baseline_covariates:
        x = cols.pop(v.name)
        c = ref.values[v.name]
        if v.kind == CONTINUOUS:
            if c == 0.0:
                cols[v.name] = x
            else:
                cols[v.name] = x - c
            continue
        levels = np.unique(x)
        if not np.any(levels == c):
            raise ValidationError(f"reference level {c:g} of {v.name!r} does not occur in the data")
        for level in levels:
            if level == c:
                continue
            cols[level_label(v.name, level)] = (x == level).astype(float)
    for arr in cols.values():
        arr.setflags(write=False)
    return Dataset(cols, data.n_rows)


def split_by_group(data: Dataset, spec: RoleSpec) -> tuple[Dataset, Dataset]:
    """Rows with exposure 0 and rows with exposure 1, order preserved."""
    r = data[spec.exposure]
    mask = r == 1
    if mask.all() or not mask.any():
        raise ValidationError("both exposure groups must be non-empty")
    return data.take(~mask), data.take(mask)


__all__: Sequence[str] = [
    "BINARY", "CATEGORICAL", "CONTINUOUS", "DataError", "Dataset", "ParseError",
    "ReferencePoint", "RoleSpec", "SchemaError", "ValidationError", "Variable",
    "center_covariates", "covariate_columns", "default_reference", "load_csv",
    "split_by_group", "validate",
]

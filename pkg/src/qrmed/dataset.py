"""Column-role-tagged observational data.

A :class:`Dataset` stores the four blocks ``X = (C, A, M, Y)``: confounders,
a binary exposure, mediators and a scalar outcome.  Node indices used by the
graph and discovery modules follow the stacked order returned by
:meth:`Dataset.matrix`::

    C -> 0 .. t-2,  A -> t-1,  M -> t .. t+p-1,  Y -> t+p
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})


class DataError(ValueError):
    """Invalid input data or role specification."""


@dataclass(frozen=True)
class Roles:
    """Assignment of CSV columns to the four blocks."""

    confounders: tuple[str, ...]
    exposure: str
    mediators: tuple[str, ...]
    outcome: str

    def __post_init__(self):
        object.__setattr__(self, "confounders", tuple(self.confounders))
        object.__setattr__(self, "mediators", tuple(self.mediators))
        used = [*self.confounders, self.exposure, *self.mediators, self.outcome]
        if len(set(used)) != len(used):
            raise DataError("each column may carry exactly one role")
        if not self.mediators:
            raise DataError("at least one mediator column is required")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "Roles":
        """Build from ``{column: role}`` with roles confounder/exposure/mediator/outcome."""
        groups: dict[str, list[str]] = {"confounder": [], "exposure": [], "mediator": [], "outcome": []}
        for col, role in mapping.items():
            if role not in groups:
                raise DataError(f"unknown role {role!r} for column {col!r}")
            groups[role].append(col)
        if len(groups["exposure"]) != 1 or len(groups["outcome"]) != 1:
            raise DataError("exactly one exposure and one outcome column are required")
        return cls(tuple(groups["confounder"]), groups["exposure"][0],
                   tuple(groups["mediator"]), groups["outcome"][0])

    @property
    def columns(self) -> list[str]:
        return [*self.confounders, self.exposure, *self.mediators, self.outcome]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable container for ``(C, A, M, Y)``.

    ``c`` has shape ``(n, t-1)`` (possibly zero columns), ``a`` and ``y`` have
    shape ``(n,)``, ``m`` has shape ``(n, p)``.
    """

    c: np.ndarray
    a: np.ndarray
    m: np.ndarray
    y: np.ndarray
    roles: Roles | None = None
    dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        a = np.asarray(self.a, dtype=float).reshape(-1)
        m = np.asarray(self.m, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        n = a.shape[0]
        if c.ndim == 1:
            c = c.reshape(n, -1) if c.size else np.zeros((n, 0))
        if m.ndim == 1:
            m = m.reshape(-1, 1)
        if n < 1:
            raise DataError("dataset has no rows")
        if c.shape[0] != n or m.shape[0] != n or y.shape[0] != n:
            raise DataError("all blocks must share the same row count")
        if m.shape[1] < 1:
            raise DataError("at least one mediator is required")
        for name, block in (("confounders", c), ("exposure", a), ("mediators", m), ("outcome", y)):
            if not np.all(np.isfinite(block)):
                raise DataError(f"non-finite values in {name}")
        if not np.all((a == 0.0) | (a == 1.0)):
            raise DataError("non-binary exposure: values must be 0 or 1")
        for arr in (c, a, m, y):
            arr.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "y", y)
        if self.roles is None:
            object.__setattr__(self, "roles", Roles(
                tuple(f"c{k + 1}" for k in range(c.shape[1])), "a",
                tuple(f"m{k + 1}" for k in range(m.shape[1])), "y"))
        elif len(self.roles.confounders) != c.shape[1] or len(self.roles.mediators) != m.shape[1]:
            raise DataError("role names do not match block widths")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def t(self) -> int:
        return self.c.shape[1] + 1

    @property
    def p(self) -> int:
        return self.m.shape[1]

    @property
    def d(self) -> int:
        return self.t + self.p + 1

    @property
    def exposure_index(self) -> int:
        return self.t - 1

    def mediator_indices(self) -> list[int]:
        return list(range(self.t, self.t + self.p))

    def has_both_arms(self) -> bool:
        return bool(self.a.min() == 0.0 and self.a.max() == 1.0)

    def matrix(self) -> np.ndarray:
        """Stacked ``n x d`` matrix in node order (C, A, M, Y)."""
        return np.column_stack([self.c, self.a, self.m, self.y])

    def take(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.c[rows], self.a[rows], self.m[rows], self.y[rows], self.roles)

    def scaled_outcome(self, factor: float) -> "Dataset":
        return Dataset(self.c, self.a, self.m, self.y * factor, self.roles)


def centralize(ds: Dataset) -> Dataset:
    """Subtract column means from C, M and Y; the exposure is left untouched."""
    def center(x):
        return x - x.mean(axis=0) if x.size else x
    return Dataset(center(ds.c), ds.a, center(ds.m), center(ds.y), ds.roles, ds.dropped)


def _parse_cell(token: str) -> float:
    if token.strip().lower() in MISSING_TOKENS:
        return math.nan
    try:
        return float(token)
    except ValueError as exc:
        raise DataError(f"non-numeric value {token!r}") from exc


def load_csv(path: str | Path, roles: Roles | Mapping[str, str]) -> Dataset:
    """Read a headed CSV and split it into blocks.

    Rows with any missing value in a used column are dropped; the number of
    dropped rows is stored in ``Dataset.dropped``.
    """
    if not isinstance(roles, Roles):
        roles = Roles.from_mapping(roles)
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(row for row in fh if not row.startswith("#"))
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            header = [h.strip() for h in header]
            index = {}
            for col in roles.columns:
                if col not in header:
                    raise DataError(f"unknown column name {col!r}")
                index[col] = header.index(col)
            rows = []
            dropped = 0
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                values = [_parse_cell(row[index[col]]) for col in roles.columns]
                if any(math.isnan(v) for v in values):
                    dropped += 1
                    continue
                rows.append(values)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError("zero rows after dropping incomplete records")
    arr = np.asarray(rows, dtype=float)
    k = len(roles.confounders)
    p = len(roles.mediators)
    a = arr[:, k]
    if not np.all((a == 0.0) | (a == 1.0)):
        raise DataError("non-binary exposure: values must be 0 or 1")
    return Dataset(arr[:, :k], a, arr[:, k + 1:k + 1 + p], arr[:, k + 1 + p], roles, dropped)


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write with 17 significant digits so that ``load_csv`` round-trips exactly."""
    cols = ds.roles.columns
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in ds.matrix():
            writer.writerow([format(float(v), ".17g") for v in row])


def from_columns(columns: Mapping[str, Sequence[float]], roles: Roles) -> Dataset:
    """Build a dataset from an in-memory mapping of column name to values."""
    def block(names: Iterable[str]):
        names = list(names)
        if not names:
            return np.zeros((len(columns[roles.exposure]), 0))
        return np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    return Dataset(block(roles.confounders), np.asarray(columns[roles.exposure], float),
                   block(roles.mediators), np.asarray(columns[roles.outcome], float), roles)

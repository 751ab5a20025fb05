"""Observational data containers, fold bookkeeping and CSV ingestion.

A sample is a table of rows (y, a, z, x_1..x_p) where the treatment a and
the instrument z are binary and the covariate vector x has a common
dimension across rows.  All containers are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import CsvParseError, InvalidConfigError


@dataclass(frozen=True)
class ObservedUnit:
    """A single observation (outcome, treatment, instrument, covariates)."""

    y: float
    a: int
    z: int
    x: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.a not in (0, 1):
            raise InvalidConfigError(f"treatment must be 0 or 1, got {self.a}")
        if self.z not in (0, 1):
            raise InvalidConfigError(f"instrument must be 0 or 1, got {self.z}")
        if not np.isfinite(self.y):
            raise InvalidConfigError(f"outcome must be finite, got {self.y}")
        if not all(np.isfinite(v) for v in self.x):
            raise InvalidConfigError("covariates must be finite")


class Dataset:
    """An ordered sample of n >= 2 units, stored as read-only arrays.

    Parameters
    ----------
    y : array of shape (n,)
        Outcomes.
    a : array of shape (n,)
        Binary treatment indicators.
    z : array of shape (n,)
        Binary instrument indicators.
    x : array of shape (n, p)
        Covariates; p may be zero.
    """

    def __init__(self, y, a, z, x) -> None:
        y = np.asarray(y, dtype=float)
        a = np.asarray(a, dtype=int)
        z = np.asarray(z, dtype=int)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n = y.shape[0]
        if n < 2:
            raise InvalidConfigError(f"a dataset needs at least 2 rows, got {n}")
        if not (a.shape[0] == z.shape[0] == x.shape[0] == n):
            raise InvalidConfigError(
                f"column lengths differ: y={n}, a={a.shape[0]}, z={z.shape[0]}, x={x.shape[0]}"
            )
        if not np.all((a == 0) | (a == 1)):
            raise InvalidConfigError("treatment column contains values other than 0/1")
        if not np.all((z == 0) | (z == 1)):
            raise InvalidConfigError("instrument column contains values other than 0/1")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise InvalidConfigError("outcome and covariates must be finite")
        for arr in (y, a, z, x):
            arr.setflags(write=False)
        self.y = y
        self.a = a
        self.z = z
        self.x = x

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_units(cls, units: Sequence[ObservedUnit]) -> "Dataset":
        if len(units) >= 2:
            p = len(units[0].x)
            if any(len(u.x) != p for u in units):
                raise InvalidConfigError("units have inconsistent covariate dimension")
        return cls(
            y=[u.y for u in units],
            a=[u.a for u in units],
            z=[u.z for u in units],
            x=[u.x for u in units],
        )

    def unit(self, i: int) -> ObservedUnit:
        return ObservedUnit(
            y=float(self.y[i]), a=int(self.a[i]), z=int(self.z[i]), x=tuple(self.x[i])
        )

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[ObservedUnit]:
        return (self.unit(i) for i in range(self.n))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.x, other.x)
        )

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, p={self.p})"


@dataclass(frozen=True)
class FoldAssignment:
    """Assignment of n units to K cross-fitting folds.

    ``fold_of[i]`` is the fold index of unit i.  Every fold is non-empty
    and fold sizes differ by at most one.
    """

    fold_of: np.ndarray
    K: int

    def __post_init__(self) -> None:
        fold_of = np.asarray(self.fold_of, dtype=int)
        fold_of.setflags(write=False)
        object.__setattr__(self, "fold_of", fold_of)
        sizes = np.bincount(fold_of, minlength=self.K)
        if np.any(sizes == 0):
            raise InvalidConfigError("every fold must contain at least one unit")
        if sizes.max() - sizes.min() > 1:
            raise InvalidConfigError("fold sizes must differ by at most 1")

    @property
    def n(self) -> int:
        return self.fold_of.shape[0]

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def complement(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != k)


def make_folds(n: int, K: int, seed: int) -> FoldAssignment:
    """Assign n units to K balanced folds, deterministically in the seed.

    Indices are shuffled with a seeded Fisher-Yates permutation and the
    permuted order is split contiguously, so the first ``n mod K`` folds
    receive one extra unit.
    """
    if K < 2 or K > n:
        raise InvalidConfigError(f"fold count must satisfy 2 <= K <= n, got K={K}, n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    base, extra = divmod(n, K)
    fold_of = np.empty(n, dtype=int)
    start = 0
    for k in range(K):
        size = base + (1 if k < extra else 0)
        fold_of[perm[start : start + size]] = k
        start += size
    return FoldAssignment(fold_of=fold_of, K=K)


@dataclass(frozen=True)
class CsvSchema:
    """Column names for the outcome, treatment, instrument and covariates."""

    outcome: str = "y"
    treatment: str = "a"
    instrument: str = "z"
    covariates: tuple[str, ...] = ("x1",)


def _parse_float(text: str, row: int, col: str) -> float:
    text = text.strip()
    if text == "":
        raise CsvParseError(f"missing value in row {row}, column {col}")
    try:
        value = float(text)
    except ValueError:
        raise CsvParseError(f"non-numeric value {text!r} in row {row}, column {col}") from None
    if not np.isfinite(value):
        raise CsvParseError(f"non-finite value {text!r} in row {row}, column {col}")
    return value


def _parse_binary(text: str, row: int, col: str) -> int:
    value = _parse_float(text, row, col)
    if value not in (0.0, 1.0):
        raise CsvParseError(f"non-binary value {text.strip()!r} in row {row}, column {col}")
    return int(value)


def load_csv(path: str, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Load a dataset from a headered CSV file.

    Rows are kept in file order.  Row numbers in error messages are
    1-based and count data rows (the header is row 0).  Missing values
    are a hard error.
    """
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise CsvParseError(f"cannot open {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        needed = [schema.outcome, schema.treatment, schema.instrument, *schema.covariates]
        col_index: dict[str, int] = {}
        for name in needed:
            if name not in header:
                raise CsvParseError(f"missing column {name!r} in {path}")
            col_index[name] = header.index(name)
        y, a, z, x = [], [], [], []
        for row_num, cells in enumerate(reader, start=1):
            if len(cells) < len(header):
                raise CsvParseError(f"row {row_num} has {len(cells)} cells, expected {len(header)}")
            y.append(_parse_float(cells[col_index[schema.outcome]], row_num, schema.outcome))
            a.append(_parse_binary(cells[col_index[schema.treatment]], row_num, schema.treatment))
            z.append(_parse_binary(cells[col_index[schema.instrument]], row_num, schema.instrument))
            x.append(
                tuple(
                    _parse_float(cells[col_index[c]], row_num, c) for c in schema.covariates
                )
            )
    if len(y) < 2:
        raise CsvParseError(f"{path} has fewer than 2 rows of data")
    return Dataset(y=y, a=a, z=z, x=np.array(x, dtype=float).reshape(len(y), -1))


def write_csv(data: Dataset, path: str, schema: CsvSchema = CsvSchema()) -> None:
    """Write a dataset to CSV with exact (round-trippable) float text."""
    if len(schema.covariates) != data.p:
        raise InvalidConfigError(
            f"schema names {len(schema.covariates)} covariates but the data has {data.p}"
        )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([schema.outcome, schema.treatment, schema.instrument, *schema.covariates])
        for i in range(data.n):
            writer.writerow(
                [
                    repr(float(data.y[i])),
                    int(data.a[i]),
                    int(data.z[i]),
                    *(repr(float(v)) for v in data.x[i]),
                ]
            )

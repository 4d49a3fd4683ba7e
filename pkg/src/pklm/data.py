"""Incomplete data matrices, missingness masks, pattern catalogs and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AllMissingRowError,
    DataError,
    EmptyDataError,
    ParseError,
    RaggedRowError,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An ``n x p`` table with holes.

    Cells are stored in a float array where ``NaN`` marks an absent value.
    Categorical columns hold integer level codes; the level tokens are kept
    in ``levels`` so the matrix can be written back out.
    """

    values: np.ndarray
    kinds: tuple = ()
    columns: tuple = ()
    levels: tuple = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("data must be two-dimensional")
        n, p = values.shape
        if n == 0:
            raise EmptyDataError("data has no rows")
        if p < 2:
            raise DataError(f"data needs at least 2 columns, got {p}")
        kinds = tuple(self.kinds) or (NUMERIC,) * p
        columns = tuple(self.columns) or tuple(f"V{j + 1}" for j in range(p))
        levels = tuple(self.levels) or (None,) * p
        if not (len(kinds) == len(columns) == len(levels) == p):
            raise DataError("column metadata does not match the number of columns")
        for j, kind in enumerate(kinds):
            if kind not in (NUMERIC, CATEGORICAL):
                raise DataError(f"unknown column kind {kind!r}")
            if kind == CATEGORICAL:
                if levels[j] is None:
                    raise DataError(f"categorical column {columns[j]!r} has no levels")
                col = values[:, j]
                present = col[~np.isnan(col)]
                if present.size and (
                    np.any(present != np.round(present))
                    or present.min() < 0
                    or present.max() >= len(levels[j])
                ):
                    raise DataError(f"column {columns[j]!r} holds invalid level codes")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "levels", levels)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def categorical(self) -> np.ndarray:
        """Boolean flag per column, True for categorical columns."""
        return np.array([k == CATEGORICAL for k in self.kinds], dtype=bool)

    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def take_rows(self, rows) -> "DataMatrix":
        return DataMatrix(self.values[np.asarray(rows)], self.kinds, self.columns, self.levels)

    def with_values(self, values) -> "DataMatrix":
        return DataMatrix(values, self.kinds, self.columns, self.levels)

    @classmethod
    def from_array(cls, values, columns: Optional[Sequence[str]] = None) -> "DataMatrix":
        """Wrap a numeric array (``NaN`` = missing) as an all-numeric matrix."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values, columns=tuple(columns) if columns is not None else ())


@dataclass(frozen=True, eq=False)
class MissingnessMask:
    """Binary ``n x p`` matrix, 1 where the cell is missing."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise DataError("mask must be two-dimensional")
        if bits.shape[0] == 0:
            raise EmptyDataError("mask has no rows")
        if np.any(bits > 1):
            raise DataError("mask bits must be 0 or 1")
        full = np.flatnonzero(bits.all(axis=1))
        if full.size:
            raise AllMissingRowError(int(full[0]))
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n_rows(self) -> int:
        return self.bits.shape[0]

    @property
    def n_cols(self) -> int:
        return self.bits.shape[1]

    def permute_rows(self, perm) -> "MissingnessMask":
        """Return the mask whose row ``i`` is row ``perm[i]`` of this one."""
        return MissingnessMask(self.bits[np.asarray(perm)])


@dataclass(frozen=True, eq=False)
class PatternCatalog:
    patterns: np.ndarray
    row_to_pattern: np.ndarray
    group_sizes: np.ndarray

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]


def build_mask(data) -> MissingnessMask:
    """Derive the missingness mask of ``data`` (a DataMatrix or float array)."""
    values = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise EmptyDataError("data has no rows")
    return MissingnessMask(np.isnan(values).astype(np.uint8))


def extract_patterns(mask: MissingnessMask) -> PatternCatalog:
    """Group the rows of ``mask`` by missingness pattern.

    Patterns are listed in order of first occurrence.
    """
    bits = mask.bits if isinstance(mask, MissingnessMask) else np.asarray(mask, dtype=np.uint8)
    uniq, first, inverse, counts = np.unique(
        bits, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return PatternCatalog(
        patterns=uniq[order],
        row_to_pattern=rank[inverse.reshape(-1)],
        group_sizes=counts[order],
    )


def drop_all_missing_rows(data: DataMatrix):
    """Remove rows without any observed cell; returns ``(data, dropped_rows)``."""
    full = np.isnan(data.values).all(axis=1)
    dropped = np.flatnonzero(full)
    if dropped.size == data.n_rows:
        raise EmptyDataError("every row is entirely missing")
    if dropped.size == 0:
        return data, dropped
    return data.take_rows(np.flatnonzero(~full)), dropped


@dataclass
class CsvOptions:
    delimiter: str = ","
    header: bool = True
    missing_tokens: tuple = ("", "NA")
    encoding: str = "utf-8"
    columns: Optional[tuple] = field(default=None)


def _as_real(token: str):
    try:
        value = float(token)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_csv(path, options: Optional[CsvOptions] = None) -> DataMatrix:
    """Read a delimited text file into a :class:`DataMatrix`.

    A column is numeric when every present token parses as a finite real;
    otherwise it is categorical and its tokens are interned to codes in
    sorted token order.
    """
    options = options or CsvOptions()
    missing = set(options.missing_tokens)
    try:
        with open(path, newline="", encoding=options.encoding) as fh:
            records = list(csv.reader(fh, delimiter=options.delimiter))
    except UnicodeDecodeError as exc:
        raise ParseError(0, 0, f"not valid {options.encoding}: {exc}") from exc
    except csv.Error as exc:
        raise ParseError(0, 0, str(exc)) from exc

    records = [rec for rec in records if rec]  # blank lines
    if options.header:
        if not records:
            raise EmptyDataError(f"{path}: no header")
        header, records = [h.strip() for h in records[0]], records[1:]
    else:
        header = None
    if not records:
        raise EmptyDataError(f"{path}: no data rows")

    p = len(header) if header is not None else len(records[0])
    first_row = 1 if options.header else 0
    for i, rec in enumerate(records):
        if len(rec) != p:
            raise RaggedRowError(i + first_row, p, len(rec))

    tokens = [[tok.strip() for tok in rec] for rec in records]
    n = len(tokens)
    values = np.full((n, p), np.nan)
    kinds, levels = [], []
    for j in range(p):
        col = [row[j] for row in tokens]
        present = [(i, t) for i, t in enumerate(col) if t not in missing]
        parsed = [_as_real(t) for _, t in present]
        if all(v is not None for v in parsed):
            for (i, _), v in zip(present, parsed):
                values[i, j] = v
            kinds.append(NUMERIC)
            levels.append(None)
        else:
            lv = tuple(sorted({t for _, t in present}))
            code = {t: k for k, t in enumerate(lv)}
            for i, t in present:
                values[i, j] = code[t]
            kinds.append(CATEGORICAL)
            levels.append(lv)

    columns = tuple(header) if header is not None else tuple(f"V{j + 1}" for j in range(p))
    return DataMatrix(values, tuple(kinds), columns, tuple(levels))


def write_csv(data: DataMatrix, path, options: Optional[CsvOptions] = None) -> None:
    """Write ``data`` so that :func:`load_csv` reproduces it exactly."""
    options = options or CsvOptions()
    na = next((t for t in options.missing_tokens if t), "NA")
    if hasattr(path, "write"):
        _write_rows(data, path, options, na)
        return
    with open(Path(path), "w", newline="", encoding=options.encoding) as fh:
        _write_rows(data, fh, options, na)


def _write_rows(data, fh, options, na):
    writer = csv.writer(fh, delimiter=options.delimiter, lineterminator="\n")
    if options.header:
        writer.writerow(data.columns)
    for row in data.values:
        out = []
        for j, v in enumerate(row):
            if np.isnan(v):
                out.append(na)
            elif data.kinds[j] == CATEGORICAL:
                out.append(data.levels[j][int(v)])
            else:
                out.append(repr(float(v)))
        writer.writerow(out)

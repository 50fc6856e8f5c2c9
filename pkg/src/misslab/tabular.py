"""Numeric tables with missing cells: masks, decompositions, pattern summaries.

The two core containers are :class:`MissMask` (a binary indicator matrix,
1 = missing) and :class:`DataMatrix` (values plus mask plus column names).
Missing cells are stored as NaN so that nothing downstream can consume a
stale value by accident; use the observed-cell accessors or an imputed copy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MissMask:
    """Binary missingness indicator matrix, 1 = missing.

    ``logical`` optionally flags a subset of the missing cells as logically
    missing (no underlying value exists, e.g. a test that cannot apply to a
    subject); imputers must leave those cells empty.
    """

    bits: np.ndarray
    logical: np.ndarray | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError("mask must be 2-dimensional")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "bits", _readonly(bits))
        if self.logical is not None:
            logical = np.asarray(self.logical, dtype=np.uint8)
            if logical.shape != bits.shape:
                raise ValueError("logical flags must match mask dimensions")
            if np.any(logical > bits):
                raise ValueError("logical cells must be a subset of missing cells")
            object.__setattr__(self, "logical", _readonly(logical))

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def p(self) -> int:
        return self.bits.shape[1]

    def column_rates(self) -> np.ndarray:
        """Fraction missing per column."""
        return self.bits.mean(axis=0)

    def overall_rate(self) -> float:
        return float(self.bits.mean())

    def logical_bits(self) -> np.ndarray:
        if self.logical is None:
            return np.zeros_like(self.bits)
        return self.logical


@dataclass(frozen=True)
class DataMatrix:
    """An n-by-p real matrix with a missingness mask.

    Missing cells hold NaN internally. ``ordering``, when present, declares
    the temporal order of the columns (a permutation of 0..p-1); it defaults
    to storage order wherever an order is needed.
    """

    values: np.ndarray
    missing: MissMask
    col_names: tuple[str, ...]
    ordering: tuple[int, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be 2-dimensional")
        if values.shape != self.missing.bits.shape:
            raise ValueError(
                f"values shape {values.shape} does not match mask shape "
                f"{self.missing.bits.shape}"
            )
        if len(self.col_names) != values.shape[1]:
            raise ValueError("need one column name per column")
        # Sentinel for flagged cells: unreachable except via accessors.
        values[self.missing.bits == 1] = np.nan
        if np.isnan(values[self.missing.bits == 0]).any():
            raise ValueError("observed cells must hold finite-representable values")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "col_names", tuple(self.col_names))
        if self.ordering is not None:
            ordering = tuple(int(j) for j in self.ordering)
            if sorted(ordering) != list(range(values.shape[1])):
                raise ValueError("ordering must be a permutation of 0..p-1")
            object.__setattr__(self, "ordering", ordering)

    @classmethod
    def complete(
        cls,
        values: np.ndarray,
        col_names: Sequence[str] | None = None,
        ordering: Sequence[int] | None = None,
    ) -> "DataMatrix":
        """Wrap a fully observed matrix."""
        values = np.asarray(values, dtype=float)
        if col_names is None:
            col_names = default_names(values.shape[1])
        mask = MissMask(np.zeros(values.shape, dtype=np.uint8))
        return cls(values, mask, tuple(col_names),
                   None if ordering is None else tuple(ordering))

    def with_mask(self, mask: MissMask) -> "DataMatrix":
        """Return a copy of this matrix with ``mask`` imposed."""
        return DataMatrix(self.values.copy(), mask, self.col_names, self.ordering)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def is_complete(self) -> bool:
        return not self.missing.bits.any()

    def observed_column(self, j: int) -> np.ndarray:
        """Values of column ``j`` restricted to observed rows."""
        return self.values[self.missing.bits[:, j] == 0, j]

    def masked_values(self) -> np.ndarray:
        """Writable copy of the value matrix, NaN at missing cells."""
        return self.values.copy()

    def effective_ordering(self) -> tuple[int, ...]:
        return self.ordering if self.ordering is not None else tuple(range(self.p))


@dataclass(frozen=True)
class PatternSummary:
    """Row-pattern census of a mask."""

    distinct_patterns: tuple[tuple[tuple[int, ...], int], ...]
    per_column_rate: np.ndarray
    monotone: bool
    file_matching_pairs: tuple[tuple[int, int], ...]

    def n_patterns(self) -> int:
        return len(self.distinct_patterns)


def default_names(p: int) -> tuple[str, ...]:
    return tuple(f"X{j + 1}" for j in range(p))


def split_obs_mis(d: DataMatrix):
    """Decompose a matrix into observed cells and missing cell positions.

    Returns ``(observed, missing)`` where ``observed`` is a list of
    ``(row, col, value)`` triples and ``missing`` a list of ``(row, col)``
    pairs; together they cover every cell exactly once.
    """
    obs_r, obs_c = np.nonzero(d.missing.bits == 0)
    mis_r, mis_c = np.nonzero(d.missing.bits == 1)
    observed = [(int(i), int(j), float(d.values[i, j])) for i, j in zip(obs_r, obs_c)]
    missing = [(int(i), int(j)) for i, j in zip(mis_r, mis_c)]
    return observed, missing


def _is_monotone(bits: np.ndarray, ordering: Sequence[int]) -> bool:
    # Monotone: under the ordering, each row's missing cells form a suffix.
    arranged = bits[:, list(ordering)]
    # A row violates iff an observed cell follows a missing cell.
    seen_missing = np.maximum.accumulate(arranged, axis=1)
    return not np.any((arranged == 0) & (seen_missing == 1))


def pattern_summary(
    m: MissMask, ordering: Sequence[int] | None = None
) -> PatternSummary:
    """Summarise the missing-data pattern of a mask.

    ``file_matching_pairs`` lists column pairs that are never simultaneously
    observed in any row, which leaves their joint distribution unidentified.
    ``monotone`` is judged under ``ordering`` (storage order by default).
    """
    bits = m.bits
    n, p = bits.shape
    if ordering is None:
        ordering = tuple(range(p))
    patterns: dict[tuple[int, ...], int] = {}
    for row in bits:
        key = tuple(int(v) for v in row)
        patterns[key] = patterns.get(key, 0) + 1
    distinct = tuple(sorted(patterns.items()))
    obs = (bits == 0).astype(np.int64)
    jointly_observed = obs.T @ obs  # (j, k) -> rows with both observed
    pairs = tuple(
        (j, k)
        for j in range(p)
        for k in range(j + 1, p)
        if jointly_observed[j, k] == 0
    )
    return PatternSummary(
        distinct_patterns=distinct,
        per_column_rate=bits.mean(axis=0),
        monotone=_is_monotone(bits, ordering),
        file_matching_pairs=pairs,
    )


def sort_for_display(m: MissMask) -> tuple[np.ndarray, np.ndarray]:
    """Row and column permutations ordering by increasing missing count.

    Ties keep original index order. Sorting a mask this way tends to create
    an impression of structure even for unstructured mechanisms, so this is
    a display aid, not evidence.
    """
    row_counts = m.bits.sum(axis=1)
    col_counts = m.bits.sum(axis=0)
    return (
        np.argsort(row_counts, kind="stable"),
        np.argsort(col_counts, kind="stable"),
    )


# ---------------------------------------------------------------------------
# CSV interchange: header row of column names, empty field = missing,
# period-decimal reals, fields in storage order.
# ---------------------------------------------------------------------------


def format_value(v: float) -> str:
    """Shortest round-trip decimal representation (deterministic)."""
    return repr(float(v))


def write_csv(d: DataMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.col_names)
        bits = d.missing.bits
        for i in range(d.n):
            w.writerow(
                ""
                if bits[i, j]
                else format_value(d.values[i, j])
                for j in range(d.p)
            )


def read_csv(path: str | Path) -> DataMatrix:
    with open(path, "r", newline="") as fh:
        r = csv.reader(fh)
        try:
            header = next(r)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        names = tuple(h.strip() for h in header)
        rows: list[list[float]] = []
        mask_rows: list[list[int]] = []
        for line_no, rec in enumerate(r, start=2):
            if len(rec) != len(names):
                raise ValueError(
                    f"{path}:{line_no}: expected {len(names)} fields, got {len(rec)}"
                )
            vals, miss = [], []
            for f in rec:
                f = f.strip()
                if f == "":
                    vals.append(np.nan)
                    miss.append(1)
                else:
                    vals.append(float(f))
                    miss.append(0)
            rows.append(vals)
            mask_rows.append(miss)
    values = np.array(rows, dtype=float).reshape(len(rows), len(names))
    bits = np.array(mask_rows, dtype=np.uint8).reshape(len(rows), len(names))
    return DataMatrix(values, MissMask(bits), names)


def write_mask_csv(m: MissMask, path: str | Path,
                   col_names: Sequence[str] | None = None) -> None:
    names = tuple(col_names) if col_names is not None else default_names(m.p)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(m.n):
            w.writerow(str(int(v)) for v in m.bits[i])


def read_mask_csv(path: str | Path) -> tuple[MissMask, tuple[str, ...]]:
    with open(path, "r", newline="") as fh:
        r = csv.reader(fh)
        try:
            header = next(r)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        names = tuple(h.strip() for h in header)
        bits = []
        for line_no, rec in enumerate(r, start=2):
            if len(rec) != len(names):
                raise ValueError(
                    f"{path}:{line_no}: expected {len(names)} fields, got {len(rec)}"
                )
            try:
                bits.append([int(f) for f in rec])
            except ValueError:
                raise ValueError(f"{path}:{line_no}: mask entries must be 0/1") from None
    arr = np.array(bits, dtype=np.uint8).reshape(len(bits), len(names))
    return MissMask(arr), names


def read_ordering(path: str | Path, col_names: Sequence[str]) -> tuple[int, ...]:
    """Read a column ordering file: one name or index per line / comma list."""
    text = Path(path).read_text()
    tokens = [t.strip() for chunk in text.splitlines() for t in chunk.split(",")]
    tokens = [t for t in tokens if t]
    order: list[int] = []
    for t in tokens:
        if t in col_names:
            order.append(list(col_names).index(t))
        else:
            try:
                order.append(int(t))
            except ValueError:
                raise ValueError(f"{path}: unknown column {t!r}") from None
    if sorted(order) != list(range(len(col_names))):
        raise ValueError(f"{path}: ordering must be a permutation of all columns")
    return tuple(order)

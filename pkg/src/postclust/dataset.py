"""Loading, cleaning and scaling of numeric tables."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MISSING_MARKERS = frozenset({"", "na", "nan"})


class DataError(ValueError):
    """Raised for unusable input data (parse failures, degenerate columns...)."""


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_MARKERS


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x p`` table of reals with named columns.

    Missing cells are stored as NaN.  String columns that were not selected
    as numeric are kept in ``labels`` (missing entries are ``None``) so rows
    can be filtered on them; they never enter ``values``.
    """

    values: np.ndarray
    column_names: tuple[str, ...]
    labels: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("values must be a 2-d array")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if values.shape[1] < 1:
            raise DataError("need at least one column")
        if len(self.column_names) != values.shape[1]:
            raise DataError("column_names length does not match the number of columns")
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("column names must be unique")
        labels = {k: tuple(v) for k, v in self.labels.items()}
        for name, col in labels.items():
            if len(col) != values.shape[0]:
                raise DataError(f"label column {name!r} has the wrong length")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            if not 0 <= name_or_index < self.p:
                raise DataError(f"column index {name_or_index} out of range")
            return int(name_or_index)
        try:
            return self.column_names.index(name_or_index)
        except ValueError:
            raise DataError(f"unknown column {name_or_index!r}") from None

    def column(self, name_or_index) -> np.ndarray:
        return self.values[:, self.column_index(name_or_index)]

    def take(self, rows) -> "DataMatrix":
        """Row subset (boolean mask or index array), order preserved."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        labels = {k: tuple(v[i] for i in rows) for k, v in self.labels.items()}
        return DataMatrix(self.values[rows], self.column_names, labels)

    def where(self, **conditions: str) -> "DataMatrix":
        """Keep rows whose label columns equal the given strings."""
        mask = np.ones(self.n, dtype=bool)
        for name, wanted in conditions.items():
            if name not in self.labels:
                raise DataError(f"unknown label column {name!r}")
            mask &= np.array([v == wanted for v in self.labels[name]], dtype=bool)
        return self.take(mask)

    def with_column(self, g: int, column: np.ndarray) -> "DataMatrix":
        values = self.values.copy()
        values[:, g] = column
        return DataMatrix(values, self.column_names, self.labels)


def load_csv(
    path,
    columns: Sequence[str] | None = None,
    delimiter: str = ",",
    header: bool = True,
) -> DataMatrix:
    """Read a delimited text file into a :class:`DataMatrix`.

    With ``columns=None`` every column whose non-missing cells all parse as
    numbers becomes a matrix column and the rest become label columns.  When
    ``columns`` is given those columns must be numeric and all others are
    kept as labels.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataError("no observations")
    if header:
        names, body = [c.strip() for c in rows[0]], rows[1:]
    else:
        names, body = [f"V{j + 1}" for j in range(len(rows[0]))], rows
    if not body:
        raise DataError("no observations")
    width = len(names)
    for lineno, r in enumerate(body, start=2 if header else 1):
        if len(r) != width:
            raise DataError(f"ragged row at line {lineno}: expected {width} fields, got {len(r)}")

    def parse(j):
        out = np.empty(len(body))
        for i, r in enumerate(body):
            cell = r[j]
            if _is_missing(cell):
                out[i] = np.nan
                continue
            try:
                out[i] = float(cell)
            except ValueError:
                return None, (i, cell)
        return out, None

    if columns is None:
        numeric, label_idx = [], []
        for j in range(width):
            col, bad = parse(j)
            (numeric if bad is None else label_idx).append((j, col))
        if not numeric:
            raise DataError("no numeric columns found")
    else:
        columns = list(columns)
        for c in columns:
            if c not in names:
                raise DataError(f"unknown column {c!r}")
        numeric = []
        for c in columns:
            j = names.index(c)
            col, bad = parse(j)
            if bad is not None:
                i, cell = bad
                raise DataError(f"non-numeric value {cell!r} in column {c!r} (data row {i + 1})")
            numeric.append((j, col))
        chosen = {j for j, _ in numeric}
        label_idx = [(j, None) for j in range(width) if j not in chosen]

    values = np.column_stack([col for _, col in numeric])
    labels = {
        names[j]: tuple(None if _is_missing(r[j]) else r[j] for r in body) for j, _ in label_idx
    }
    return DataMatrix(values, [names[j] for j, _ in numeric], labels)


def save_csv(m: DataMatrix, path, delimiter: str = ",", include_labels: bool = True) -> None:
    """Write ``m`` so that :func:`load_csv` reads back identical values."""
    label_names = list(m.labels) if include_labels else []
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(list(m.column_names) + label_names)
        for i in range(m.n):
            nums = ["NA" if np.isnan(v) else repr(float(v)) for v in m.values[i]]
            labs = ["NA" if m.labels[k][i] is None else m.labels[k][i] for k in label_names]
            w.writerow(nums + labs)


def drop_incomplete_rows(m: DataMatrix) -> DataMatrix:
    """Keep rows without any missing cell, numeric or label."""
    keep = ~np.isnan(m.values).any(axis=1)
    for col in m.labels.values():
        keep &= np.array([v is not None for v in col], dtype=bool)
    if keep.sum() < 2:
        raise DataError("insufficient complete observations")
    return m.take(keep)


def zscale(m: DataMatrix) -> DataMatrix:
    """Center each column and divide by its standard deviation (ddof=1)."""
    if m.n < 2:
        raise DataError("need at least two rows to scale")
    if np.isnan(m.values).any():
        raise DataError("cannot scale data with missing values")
    mean = m.values.mean(axis=0)
    sd = m.values.std(axis=0, ddof=1)
    for name, s in zip(m.column_names, sd):
        if not s > 0:
            raise DataError(f"column {name!r} is constant and cannot be scaled")
    return DataMatrix((m.values - mean) / sd, m.column_names, m.labels)


def penguins_path() -> Path:
    """Path of the bundled Palmer penguins table (344 rows, CC0)."""
    return Path(__file__).with_name("data") / "penguins.csv"


PENGUIN_MEASURES = ("bill_length_mm", "bill_depth_mm", "flipper_length_mm", "body_mass_g")

"""Datasets, column standardization and CSV input/output.

All sample statistics use the ``n - 1`` denominator, so a standardized
column satisfies ``x_j @ x_j == n - 1``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConstantColumn,
    ConstantVector,
    DataError,
    DimensionMismatch,
    EmptyFile,
    MissingColumn,
    NonFinite,
    ParseError,
)

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str = REGRESSION
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DimensionMismatch(f"X has {n} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NonFinite("X and y must not contain NaN or infinite values")
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION and not np.all((y == 0) | (y == 1)):
            raise DataError("classification response must be binary {0, 1}")
        if self.column_names is not None and len(self.column_names) != p:
            raise DimensionMismatch("column_names must have one label per column of X")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.column_names is not None:
            object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, rows):
        return Dataset(self.X[rows], self.y[rows], self.task, self.column_names)


@dataclass(frozen=True)
class StandardizedMatrix:
    values: np.ndarray
    center: np.ndarray
    scale: np.ndarray


@dataclass(frozen=True)
class StandardizedResponse:
    values: np.ndarray
    center: float = 0.0
    scale: float = 1.0
    task: str = REGRESSION

    def restore(self, z):
        """Map values on the standardized scale back to the original scale."""
        return self.center + self.scale * np.asarray(z, dtype=float)


def _check_finite(a):
    if not np.all(np.isfinite(a)):
        raise NonFinite("input contains NaN or infinite values")


def standardize(X) -> StandardizedMatrix:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    _check_finite(X)
    if X.shape[0] < 2:
        raise DataError("standardization needs at least two rows")
    constant = np.flatnonzero(np.ptp(X, axis=0) == 0)
    if constant.size:
        raise ConstantColumn(int(constant[0]))
    center = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    return StandardizedMatrix((X - center) / scale, center, scale)


def apply_standardization(X_new, center, scale):
    X_new = np.asarray(X_new, dtype=float)
    center = np.asarray(center, dtype=float).ravel()
    scale = np.asarray(scale, dtype=float).ravel()
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if center.shape != scale.shape or X_new.shape[1] != center.shape[0]:
        raise DimensionMismatch(
            f"expected {center.shape[0]} columns, got {X_new.shape[1]}")
    if np.any(scale <= 0):
        raise DataError("scale entries must be positive")
    return (X_new - center) / scale


def standardize_response(y, task=REGRESSION) -> StandardizedResponse:
    y = np.asarray(y, dtype=float).ravel()
    _check_finite(y)
    if task == CLASSIFICATION:
        if not np.all((y == 0) | (y == 1)):
            raise DataError("classification response must be binary {0, 1}")
        return StandardizedResponse(y.copy(), 0.0, 1.0, task)
    if np.ptp(y) == 0:
        raise ConstantVector("response is constant")
    center = float(y.mean())
    scale = float(y.std(ddof=1))
    return StandardizedResponse((y - center) / scale, center, scale, task)


def sample_correlation(u, x):
    """Pearson sample correlation between two vectors."""
    u = np.asarray(u, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if u.shape != x.shape:
        raise DimensionMismatch("vectors must have equal length")
    if u.size < 2:
        raise DataError("need at least two observations")
    if np.ptp(u) == 0 or np.ptp(x) == 0:
        raise ConstantVector("correlation is undefined for a constant vector")
    du = u - u.mean()
    dx = x - x.mean()
    r = (du @ dx) / math.sqrt((du @ du) * (dx @ dx))
    return float(min(1.0, max(-1.0, r)))


def load_csv(path, response_column, task=REGRESSION) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        text = fh.read()
    return parse_csv(text, response_column, task)


def parse_csv(text, response_column, task=REGRESSION) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile("CSV file is empty")
    header = [h.strip() for h in rows[0]]
    if response_column not in header:
        raise MissingColumn(f"response column {response_column!r} not in header")
    if len(rows) < 2:
        raise EmptyFile("CSV file has a header but no data rows")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"row {i} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(i, header[c], cell) from None
            if not math.isfinite(value):
                raise ParseError(i, header[c], cell)
            data[i - 2, c] = value
    r = header.index(response_column)
    keep = [c for c in range(len(header)) if c != r]
    return Dataset(data[:, keep], data[:, r], task, tuple(header[c] for c in keep))


def write_csv(path, dataset: Dataset, response_column="y"):
    names = dataset.column_names or tuple(f"x{j + 1}" for j in range(dataset.p))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*names, response_column])
    for xi, yi in zip(dataset.X, dataset.y):
        writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
    return buf.getvalue() if path is None else _write_text(path, buf.getvalue())


def _write_text(path, text):
    from .files import atomic_write_text

    atomic_write_text(path, text)
    return path

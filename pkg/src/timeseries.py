"""TimeSeries container and CSV ingestion/export."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from errors import ConfigError, DataError

FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class Splits:
    """Consecutive train/val/test segment sizes."""

    n_train: int
    n_val: int
    n_test: int

    def validate(self, n: int) -> None:
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ConfigError(f"every split must be non-empty, got {self}")
        if self.total > n:
            raise ConfigError(f"splits need {self.total} samples but the series has {n}")

    @property
    def total(self) -> int:
        return self.n_train + self.n_val + self.n_test

    @property
    def val_range(self) -> tuple[int, int]:
        return self.n_train, self.n_train + self.n_val

    @property
    def test_range(self) -> tuple[int, int]:
        start = self.n_train + self.n_val
        return start, start + self.n_test

    def to_dict(self) -> dict:
        return {"n_train": self.n_train, "n_val": self.n_val, "n_test": self.n_test}


@dataclass(frozen=True)
class TimeSeries:
    """
    Real-valued series of shape (n, p) with column names and optional splits.

    Univariate series are stored as (n, 1).
    """

    values: np.ndarray
    columns: tuple[str, ...] = field(default=())
    splits: Optional[Splits] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError(f"series must be 1-D or 2-D, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self.columns:
            object.__setattr__(self, "columns", default_columns(values.shape[1]))
        if len(self.columns) != values.shape[1]:
            raise DataError(f"{len(self.columns)} column names for {values.shape[1]} columns")
        if self.splits is not None:
            self.splits.validate(values.shape[0])

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def with_splits(self, splits: Splits) -> "TimeSeries":
        return TimeSeries(self.values, self.columns, splits)

    def column(self, index: int = 0) -> np.ndarray:
        return self.values[:, index]


def default_columns(p: int) -> tuple[str, ...]:
    return ("y",) if p == 1 else tuple(f"y{i}" for i in range(p))


def as_array(series: Union[TimeSeries, np.ndarray]) -> np.ndarray:
    """Float array view of a TimeSeries or raw array (1-D stays 1-D)."""
    if isinstance(series, TimeSeries):
        return series.values[:, 0] if series.p == 1 else series.values
    return np.asarray(series, dtype=float)


def write_series_csv(series: TimeSeries, path: Path) -> Path:
    """Write a series as CSV: header row, one column per dimension, no index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(series.values, columns=list(series.columns))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_series_csv(path: Path, columns: Optional[list[str]] = None) -> TimeSeries:
    """
    Load a series CSV written by write_series_csv (or any numeric CSV with a header).

    Args:
        path: CSV file
        columns: Optional subset of columns to keep

    Returns:
        TimeSeries without splits
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"could not read series CSV {path}: {e}") from e

    if columns:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise DataError(f"{path} has no column(s) {missing}")
        frame = frame[columns]
    if frame.shape[1] == 0:
        raise DataError(f"{path} has no columns")

    try:
        values = frame.to_numpy(dtype=float)
    except ValueError as e:
        raise DataError(f"{path} contains non-numeric values: {e}") from e
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path} contains missing or non-finite values")
    return TimeSeries(values, tuple(str(c) for c in frame.columns))

"""Paired forecast/actual time series: parsing, validation, error measures.

The roles of the two value columns (which one drives the simulation) are
assigned by the caller; internally the driving series is always ``x`` and the
other one ``y``.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime

import numpy as np

DEFAULT_DATETIME_COL = "datetime"
DEFAULT_X_COL = "forecasts"
DEFAULT_Y_COL = "actuals"


class DataValidationError(ValueError):
    """Raised when input data violates the paired-series contract."""


def _readonly(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PairedSeries:
    """Validated paired input data (x, y) on a uniform time grid.

    ``x`` and ``y`` are power values in MW, both within [0, cap]. Instances
    are immutable and safe to share across parallel workers.
    """

    timestamps: tuple[datetime, ...]
    x: np.ndarray
    y: np.ndarray
    cap: float

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "x", _readonly(self.x))
        object.__setattr__(self, "y", _readonly(self.y))
        n = len(self.timestamps)
        if n == 0:
            raise DataValidationError("empty series")
        if len(self.x) != n or len(self.y) != n:
            raise DataValidationError(
                f"length mismatch: {n} timestamps, {len(self.x)} x, {len(self.y)} y"
            )
        if not (self.cap > 0):
            raise DataValidationError(f"cap must be > 0, got {self.cap}")
        for name, v in (("x", self.x), ("y", self.y)):
            if not np.all(np.isfinite(v)):
                i = int(np.flatnonzero(~np.isfinite(v))[0])
                raise DataValidationError(f"non-finite {name} value at row {i}")
            bad = (v < 0) | (v > self.cap)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise DataValidationError(
                    f"{name} value out of [0,cap] at row {i}: {v[i]} (cap={self.cap})"
                )
        _check_uniform_step(self.timestamps)

    @property
    def n(self) -> int:
        return len(self.x)

    def errors(self) -> np.ndarray:
        """Observed errors eps_i = y_i - x_i."""
        return self.y - self.x

    def slice(self, start: datetime | None = None, end: datetime | None = None) -> "PairedSeries":
        """Sub-series with start <= timestamp <= end (inclusive)."""
        idx = [
            i
            for i, t in enumerate(self.timestamps)
            if (start is None or t >= start) and (end is None or t <= end)
        ]
        if not idx:
            raise DataValidationError(f"no rows between {start} and {end}")
        return PairedSeries(
            timestamps=tuple(self.timestamps[i] for i in idx),
            x=self.x[idx],
            y=self.y[idx],
            cap=self.cap,
        )


@dataclass(frozen=True)
class SidSelection:
    """Simulation input data: the x-series scenarios are generated over."""

    timestamps: tuple[datetime, ...]
    x_sid: np.ndarray
    subset_of_input: bool = False

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "x_sid", _readonly(self.x_sid))
        if len(self.x_sid) < 1:
            raise DataValidationError("SID must contain at least one point")
        if len(self.timestamps) != len(self.x_sid):
            raise DataValidationError("SID timestamps and values differ in length")
        if np.any(self.x_sid < 0):
            raise DataValidationError("SID values must be >= 0")

    @property
    def n_sid(self) -> int:
        return len(self.x_sid)

    @classmethod
    def from_series(
        cls, series: PairedSeries, start: datetime | None = None, end: datetime | None = None
    ) -> "SidSelection":
        sub = series.slice(start, end)
        return cls(timestamps=sub.timestamps, x_sid=sub.x, subset_of_input=True)


def _check_uniform_step(timestamps) -> None:
    if len(timestamps) < 2:
        return
    step = timestamps[1] - timestamps[0]
    if step.total_seconds() <= 0:
        raise DataValidationError("timestamps must be strictly increasing")
    for i in range(2, len(timestamps)):
        d = timestamps[i] - timestamps[i - 1]
        if d != step:
            raise DataValidationError(
                f"non-uniform timestep at row {i}: {d} != {step} "
                f"({timestamps[i - 1]} -> {timestamps[i]})"
            )


def _parse_datetime(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError as e:
        raise DataValidationError(f"malformed datetime at row {row}: {text!r}") from e


def _parse_value(text: str, row: int, col: str) -> float:
    t = text.strip()
    if t == "":
        raise DataValidationError(f"missing value at row {row}, column {col!r}")
    try:
        return float(t)
    except ValueError as e:
        raise DataValidationError(f"non-numeric value at row {row}, column {col!r}: {text!r}") from e


def load_csv(
    path,
    cap: float | None = None,
    datetime_col: str = DEFAULT_DATETIME_COL,
    x_col: str = DEFAULT_X_COL,
    y_col: str = DEFAULT_Y_COL,
) -> PairedSeries:
    """Read a paired series from CSV.

    The file must have a header with a datetime column and the two value
    columns. When ``cap`` is omitted it defaults to the maximum observed
    value rounded up to the next integer.
    """
    timestamps: list[datetime] = []
    xs: list[float] = []
    ys: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (datetime_col, x_col, y_col):
            if col not in header:
                raise DataValidationError(f"missing column {col!r} in {path} (header: {header})")
        for row_idx, row in enumerate(reader):
            for col in (datetime_col, x_col, y_col):
                if row.get(col) is None:
                    raise DataValidationError(f"missing value at row {row_idx}, column {col!r}")
            timestamps.append(_parse_datetime(row[datetime_col], row_idx))
            xs.append(_parse_value(row[x_col], row_idx, x_col))
            ys.append(_parse_value(row[y_col], row_idx, y_col))
    if not timestamps:
        raise DataValidationError(f"no data rows in {path}")
    if cap is None:
        cap = float(math.ceil(max(max(xs), max(ys))))
        if cap <= 0:
            cap = 1.0
    return PairedSeries(timestamps=tuple(timestamps), x=xs, y=ys, cap=float(cap))


def _fmt(v: float) -> str:
    # repr round-trips doubles exactly, keeping load(save(s)) the identity
    return repr(float(v))


def atomic_write_text(path, text: str) -> None:
    """Write a file atomically (temp file + rename) in the target directory."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_csv(
    series: PairedSeries,
    path,
    datetime_col: str = DEFAULT_DATETIME_COL,
    x_col: str = DEFAULT_X_COL,
    y_col: str = DEFAULT_Y_COL,
) -> None:
    """Write a paired series as CSV (inverse of load_csv)."""
    lines = [f"{datetime_col},{x_col},{y_col}"]
    for t, xv, yv in zip(series.timestamps, series.x, series.y):
        lines.append(f"{t.isoformat()},{_fmt(xv)},{_fmt(yv)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_scenarios_csv(
    timestamps,
    x: np.ndarray,
    scenarios: np.ndarray,
    path,
    datetime_col: str = DEFAULT_DATETIME_COL,
) -> None:
    """Write scenario output: datetime, x, scenario_1..scenario_M."""
    scenarios = np.asarray(scenarios, dtype=float)
    m = scenarios.shape[0]
    header = [datetime_col, "x"] + [f"scenario_{k + 1}" for k in range(m)]
    lines = [",".join(header)]
    for i, t in enumerate(timestamps):
        row = [t.isoformat(), _fmt(x[i])] + [_fmt(scenarios[k, i]) for k in range(m)]
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_sid_csv(
    path,
    datetime_col: str = DEFAULT_DATETIME_COL,
    x_col: str = DEFAULT_X_COL,
) -> SidSelection:
    """Read an external SID file: datetime column plus one value column.

    Falls back to a column literally named "x" when ``x_col`` is absent.
    """
    timestamps: list[datetime] = []
    xs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if datetime_col not in header:
            raise DataValidationError(f"missing column {datetime_col!r} in {path}")
        col = x_col if x_col in header else "x"
        if col not in header:
            raise DataValidationError(f"missing column {x_col!r} or 'x' in {path}")
        for row_idx, row in enumerate(reader):
            timestamps.append(_parse_datetime(row[datetime_col], row_idx))
            xs.append(_parse_value(row[col], row_idx, col))
    if not timestamps:
        raise DataValidationError(f"no data rows in {path}")
    return SidSelection(timestamps=tuple(timestamps), x_sid=xs, subset_of_input=False)


def relative_error(x: float, y: float) -> float:
    """(y - x) / x; defined only for x > 0."""
    if x <= 0:
        raise ValueError(f"relative error undefined for x <= 0 (got x={x})")
    return (y - x) / x


def mare(x, y) -> float:
    """Mean absolute relative error, skipping indices where x is zero.

    Zero-x indices are excluded from both the sum and the count, so the
    result remains a proper mean of defined terms.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    pos = x > 0
    if not pos.any():
        raise ValueError("MARE undefined: all x values are zero")
    return float(np.mean(np.abs((y[pos] - x[pos]) / x[pos])))


def mape(x, y) -> float:
    """Mean absolute percentage error: 100 * mare."""
    return 100.0 * mare(x, y)


def sorted_view(series: PairedSeries) -> np.ndarray:
    """Stable permutation putting x in nondecreasing order."""
    return np.argsort(series.x, kind="stable")

"""Shared data types for the fan pipeline.

All containers hold float64 numpy arrays and are treated as immutable once
built; arrays are flagged read-only at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from fanwatch.synthgen import ScheduleConfig

RPM = "rpm"
SENSORS = 4
AXES = ("x", "y", "z")
KINDS = ("acc", "rot")


def gyro_channel_names() -> list[str]:
    """The 24 gyro column names, ``g<sensor>_<acc|rot>_<x|y|z>``."""
    return [f"g{s}_{k}_{a}" for s in range(1, SENSORS + 1) for k in KINDS for a in AXES]


GYRO_CHANNELS = tuple(gyro_channel_names())


class DataError(ValueError):
    """Input data violates a contract (empty, too short, non-finite, ...)."""


class ConfigError(ValueError):
    """A configuration value is invalid."""


class Impeller(str, Enum):
    HEALTHY = "healthy"
    DAMAGED = "damaged"


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Channel:
    name: str
    rate_hz: float
    samples: np.ndarray
    t0_s: float = 0.0

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise DataError(f"channel {self.name}: rate_hz must be positive")
        object.__setattr__(self, "samples", _frozen(self.samples))
        if self.samples.ndim != 1:
            raise DataError(f"channel {self.name}: samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise DataError(f"channel {self.name}: non-finite sample")

    def __len__(self):
        return len(self.samples)

    def timestamps(self) -> np.ndarray:
        return self.t0_s + np.arange(len(self.samples)) / self.rate_hz


@dataclass(frozen=True, eq=False)
class RawRecording:
    channels: tuple[Channel, ...]
    schedule: ScheduleConfig
    impeller: Impeller
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "impeller", Impeller(self.impeller))
        names = [c.name for c in self.channels]
        if names.count(RPM) != 1:
            raise DataError("recording needs exactly one 'rpm' channel")
        if len(set(names)) != len(names):
            raise DataError("duplicate channel names")
        gyros = self.gyro_channels
        if not gyros:
            raise DataError("recording has no gyro channels")
        if len({c.rate_hz for c in gyros}) != 1 or len({len(c) for c in gyros}) != 1:
            raise DataError("gyro channels must share one rate and one length")
        if not self.rpm.rate_hz < gyros[0].rate_hz:
            raise DataError("rpm rate must be lower than the gyro rate")

    @property
    def rpm(self) -> Channel:
        return next(c for c in self.channels if c.name == RPM)

    @property
    def gyro_channels(self) -> tuple[Channel, ...]:
        return tuple(c for c in self.channels if c.name != RPM)

    def channel(self, name: str) -> Channel:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True, eq=False)
class AlignedTable:
    """Uniform-grid table at the master (gyro) rate.

    ``plateau_index`` is 0 for transient rows and k >= 1 on the plateau held
    at ``k * rpm_step``.
    """

    timestamps_s: np.ndarray
    column_names: tuple[str, ...]
    columns: np.ndarray  # shape (rows, len(column_names))
    target: np.ndarray
    plateau_index: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "timestamps_s", _frozen(self.timestamps_s))
        cols = np.array(self.columns, dtype=np.float64, copy=True)
        if cols.ndim == 1:
            cols = cols.reshape(-1, 1)
        cols.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "target", _frozen(self.target))
        object.__setattr__(self, "plateau_index", _frozen(self.plateau_index, np.int64))

    def __len__(self):
        return len(self.target)

    def column(self, name: str) -> np.ndarray:
        return self.columns[:, self.column_names.index(name)]

    def take(self, rows) -> AlignedTable:
        """Sub-table with the given rows (indices or boolean mask)."""
        return AlignedTable(
            self.timestamps_s[rows],
            self.column_names,
            self.columns[rows],
            self.target[rows],
            self.plateau_index[rows],
        )

    @property
    def rate_hz(self) -> float:
        if len(self) < 2:
            raise DataError("rate undefined for fewer than two rows")
        return 1.0 / float(self.timestamps_s[1] - self.timestamps_s[0])


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    target: np.ndarray
    column_names: tuple[str, ...]
    row_provenance: np.ndarray

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, copy=True)
        if feats.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", _frozen(self.target))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "row_provenance", _frozen(self.row_provenance, np.int64))
        n, p = feats.shape
        if len(self.target) != n or len(self.row_provenance) != n:
            raise DataError("features, target and provenance lengths differ")
        if p != len(self.column_names):
            raise DataError("column count does not match column_names")
        if not (np.all(np.isfinite(feats)) and np.all(np.isfinite(self.target))):
            raise DataError("dataset contains non-finite values")

    def __len__(self):
        return len(self.target)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> Dataset:
        return Dataset(
            self.features[rows], self.target[rows], self.column_names, self.row_provenance[rows]
        )

    @classmethod
    def from_table(cls, table: AlignedTable) -> Dataset:
        """Every table row becomes a dataset row; provenance is the row index."""
        return cls(table.columns, table.target, table.column_names, np.arange(len(table)))


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: Dataset
    test: Dataset

    def __post_init__(self):
        if self.train.column_names != self.test.column_names:
            raise DataError("train and test columns differ")
        if np.intersect1d(self.train.row_provenance, self.test.row_provenance).size:
            raise DataError("train and test provenance overlap")


@dataclass(frozen=True)
class Violation:
    kind: str
    rows: tuple[int, ...] = ()
    detail: str = ""


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def validate(table: AlignedTable, master_rate_hz: float | None = None) -> ValidationResult:
    """Check the AlignedTable invariants without raising.

    Spacing is checked against ``master_rate_hz`` when given, otherwise
    against the first interval of the table.
    """
    found: list[Violation] = []
    n = len(table.target)
    lengths = {
        "timestamps": len(table.timestamps_s),
        "columns": table.columns.shape[0],
        "target": n,
        "plateau_index": len(table.plateau_index),
    }
    if len(set(lengths.values())) != 1:
        found.append(Violation("length-mismatch", detail=repr(lengths)))
        return ValidationResult(tuple(found))
    if table.columns.shape[1] != len(table.column_names):
        found.append(Violation("column-count", detail="columns vs column_names"))

    bad_cells = ~np.isfinite(table.columns)
    bad_rows = np.flatnonzero(bad_cells.any(axis=1) | ~np.isfinite(table.target)
                              | ~np.isfinite(table.timestamps_s))
    if bad_rows.size:
        found.append(Violation("non-finite", tuple(int(r) for r in bad_rows)))

    if n >= 2:
        steps = np.diff(table.timestamps_s)
        nonmono = np.flatnonzero(~(steps > 0)) + 1
        if nonmono.size:
            found.append(Violation("non-monotone timestamps", tuple(int(r) for r in nonmono)))
        else:
            dt = 1.0 / master_rate_hz if master_rate_hz else steps[0]
            # tolerance covers rounding of t0 + i / rate
            uneven = np.flatnonzero(np.abs(steps - dt) > 1e-9 * max(1.0, abs(table.timestamps_s[-1])))
            if uneven.size:
                found.append(Violation("non-uniform spacing", tuple(int(r) + 1 for r in uneven)))
    if np.any(table.plateau_index < 0):
        found.append(Violation("negative plateau index",
                               tuple(int(r) for r in np.flatnonzero(table.plateau_index < 0))))
    return ValidationResult(tuple(found))

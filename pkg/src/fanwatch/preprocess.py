"""Alignment and the two data-reduction strategies (decimation and binning)."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from fanwatch import stats
from fanwatch.core import AlignedTable, ConfigError, DataError, Dataset, RawRecording
from fanwatch.synthgen import plateau_index

FEATURE_ORDER = stats.FEATURES


@dataclass(frozen=True)
class FeatureSet:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(dict.fromkeys(self.names))
        if not names:
            raise ConfigError("feature set must not be empty")
        unknown = [n for n in names if n not in FEATURE_ORDER]
        if unknown:
            raise ConfigError(f"unknown bin features: {unknown}")
        object.__setattr__(self, "names", tuple(n for n in FEATURE_ORDER if n in names))

    @classmethod
    def parse(cls, text: str) -> FeatureSet:
        """``"all"``, a preset label (``"mean_std"``) or a comma list."""
        text = text.strip().lower()
        if text in PRESETS:
            return PRESETS[text]
        return cls(tuple(p.strip() for p in re.split(r"[,_]", text) if p.strip()))

    @property
    def label(self) -> str:
        for key, preset in PRESETS.items():
            if preset == self:
                return key
        return "_".join(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name):
        return name in self.names


MEAN = FeatureSet(("mean",))
MEAN_STD = FeatureSet(("mean", "std"))
ALL = FeatureSet(FEATURE_ORDER)
PRESETS = {"mean": MEAN, "mean_std": MEAN_STD, "all": ALL}


@dataclass(frozen=True)
class BinConfig:
    size: int
    features: FeatureSet = MEAN

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ConfigError("bin size must be a positive integer")
        if self.size < 2 and ({"std", "kurtosis"} & set(self.features.names)):
            raise ConfigError("std and kurtosis need bins of at least 2 samples")


def forward_fill_align(rec: RawRecording) -> AlignedTable:
    """Put every channel on the gyro grid, padding rpm with its last value.

    Grid rows earlier than the first rpm sample are dropped.
    """
    rpm = rec.rpm
    if len(rpm) == 0:
        raise DataError("rpm channel is empty")
    gyros = rec.gyro_channels
    grid = gyros[0].timestamps()
    latest = np.searchsorted(rpm.timestamps(), grid, side="right") - 1
    keep = latest >= 0
    grid = grid[keep]
    target = rpm.samples[latest[keep]]
    columns = np.column_stack([c.samples[keep] for c in gyros])
    return AlignedTable(
        grid,
        tuple(c.name for c in gyros),
        columns,
        target,
        plateau_index(grid, rec.schedule),
    )


def remove_ascends(table: AlignedTable) -> AlignedTable:
    """Drop every row whose plateau index is 0."""
    keep = table.plateau_index != 0
    if not keep.any():
        raise DataError("no plateau rows left after removing ascends")
    if keep.all():
        return table
    return table.take(keep)


def stride_for(fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise ConfigError("fraction must lie in (0, 1]")
    return max(1, int(round(1.0 / fraction)))


def downsample(ds: Dataset, fraction: float) -> Dataset:
    """Keep rows 0, k, 2k, ... with k = round(1 / fraction)."""
    k = stride_for(fraction)
    if len(ds) == 0:
        raise DataError("cannot downsample an empty dataset")
    if k == 1:
        return ds
    return ds.take(slice(0, None, k))


def bin_table(table: AlignedTable, cfg: BinConfig, first_ordinal: int = 0) -> Dataset:
    """Summarise consecutive, non-overlapping windows of ``cfg.size`` rows.

    A trailing partial window is dropped. Columns are ``<channel>_<feature>``
    in channel-major order; the target is the mean rpm of the window and the
    provenance is the bin ordinal (offset by ``first_ordinal``).
    """
    n_bins = len(table) // cfg.size
    if n_bins == 0:
        raise DataError(f"table of {len(table)} rows is shorter than one bin of {cfg.size}")
    used = n_bins * cfg.size
    p = len(table.column_names)
    windows = table.columns[:used].reshape(n_bins, cfg.size, p)
    per_feature = stats.window_stats(windows, cfg.features.names)
    # (bins, channels, features) -> channel-major columns
    block = np.stack([per_feature[f] for f in cfg.features.names], axis=2)
    features = block.reshape(n_bins, p * len(cfg.features.names))
    names = [f"{ch}_{f}" for ch in table.column_names for f in cfg.features.names]
    target = stats.window_stats(table.target[:used].reshape(n_bins, cfg.size, 1), ("mean",))["mean"][:, 0]
    return Dataset(features, target, names, first_ordinal + np.arange(n_bins))


@dataclass(frozen=True)
class Downsample:
    fraction: float

    def __post_init__(self):
        stride_for(self.fraction)

    @property
    def config_id(self) -> str:
        return f"ds-{self.fraction:g}"

    @property
    def kind(self) -> str:
        return "downsample"

    def describe(self) -> str:
        return f"downsample({self.fraction:g})"

    def apply(self, table: AlignedTable, offset: int = 0) -> Dataset:
        ds = downsample(Dataset.from_table(table), self.fraction)
        return ds if offset == 0 else Dataset(
            ds.features, ds.target, ds.column_names, ds.row_provenance + offset)


@dataclass(frozen=True)
class Binning:
    config: BinConfig

    @property
    def config_id(self) -> str:
        return f"bin-{self.config.size}-{self.config.features.label}"

    @property
    def kind(self) -> str:
        return "bin"

    def describe(self) -> str:
        return f"bin({self.config.size}/{self.config.features.label})"

    def apply(self, table: AlignedTable, offset: int = 0) -> Dataset:
        return bin_table(table, self.config, first_ordinal=offset)


Reduction = Downsample | Binning


def parse_reduction(text: str) -> Reduction:
    """Inverse of ``config_id``: ``ds-0.25`` or ``bin-1000-mean_std``."""
    text = text.strip()
    parts = text.split("-", 2)
    try:
        if text.startswith("ds-"):
            return Downsample(float(text[3:]))
        if parts[0] == "bin" and len(parts) == 3:
            return Binning(BinConfig(int(parts[1]), FeatureSet.parse(parts[2])))
    except ValueError as exc:
        raise ConfigError(f"bad reduction {text!r}: {exc}") from exc
    raise ConfigError(f"bad reduction {text!r}")


def reduce_table(table: AlignedTable, reduction: Reduction) -> Dataset:
    """Reduce a table as a whole (the shuffled-split path)."""
    return reduction.apply(table)

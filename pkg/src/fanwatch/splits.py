"""Train/test partitions: a shuffled 67/33 split and a split by rpm plateau."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fanwatch.core import AlignedTable, ConfigError, DataError, Dataset, SplitPair
from fanwatch.preprocess import Binning, Reduction

RNG_NAME = "numpy-pcg64-seedsequence-v1"
_SPLIT_STREAM = 7


@dataclass(frozen=True)
class PartitionPlan:
    train_steps: frozenset[int] = frozenset({1, 3, 5, 7})
    test_steps: frozenset[int] = frozenset({2, 4, 6})
    excluded_steps: frozenset[int] = frozenset({8})

    def __post_init__(self):
        for name in ("train_steps", "test_steps", "excluded_steps"):
            steps = frozenset(int(s) for s in getattr(self, name))
            if 0 in steps or any(s < 0 for s in steps):
                raise ConfigError(f"{name} must hold plateau ordinals >= 1")
            object.__setattr__(self, name, steps)
        if (self.train_steps & self.test_steps or self.train_steps & self.excluded_steps
                or self.test_steps & self.excluded_steps):
            raise ConfigError("train, test and excluded steps must be disjoint")


def shuffled_split(ds: Dataset, ratio: float = 0.67, seed: int = 0) -> SplitPair:
    """Permute the rows with a seeded generator; the first floor(ratio*n) train."""
    if not 0 < ratio < 1:
        raise ConfigError("ratio must lie in (0, 1)")
    n = len(ds)
    if n < 3:
        raise DataError(f"shuffled split needs at least 3 rows, got {n}")
    n_train = math.floor(ratio * n)
    if n_train == 0 or n_train == n:
        raise DataError(f"ratio {ratio} leaves an empty partition for {n} rows")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_SPLIT_STREAM,))))
    order = rng.permutation(n)
    return SplitPair(ds.take(order[:n_train]), ds.take(order[n_train:]))


def plateau_segments(table: AlignedTable) -> list[tuple[int, int, int]]:
    """Contiguous runs of one plateau index as (ordinal, start, stop)."""
    idx = table.plateau_index
    if len(idx) == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx)) + 1
    starts = np.concatenate(([0], cuts))
    stops = np.concatenate((cuts, [len(idx)]))
    return [(int(idx[a]), int(a), int(b)) for a, b in zip(starts, stops)]


def reduce_by_plateau(table: AlignedTable, reduction: Reduction, steps=None) -> Dataset:
    """Reduce each plateau segment on its own so no bin straddles two plateaus.

    ``steps`` restricts the output to the given ordinals (all non-zero
    plateaus when None). Provenance stays unique over the whole table: row
    indices for decimation, global bin ordinals for binning.
    """
    segments = [s for s in plateau_segments(table) if s[0] != 0]
    parts = []
    ordinal = 0
    for step, start, stop in segments:
        offset = ordinal if isinstance(reduction, Binning) else start
        if isinstance(reduction, Binning):
            ordinal += (stop - start) // reduction.config.size
        if steps is not None and step not in steps:
            continue
        parts.append(reduction.apply(table.take(slice(start, stop)), offset=offset))
    if not parts:
        raise DataError("no plateau rows selected")
    return Dataset(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.target for p in parts]),
        parts[0].column_names,
        np.concatenate([p.row_provenance for p in parts]),
    )


def partitioned_split(table: AlignedTable, plan: PartitionPlan, reduction: Reduction) -> SplitPair:
    """Train on ``plan.train_steps`` plateaus, test on ``plan.test_steps``."""
    if not plan.train_steps or not plan.test_steps:
        raise DataError("partition plan leaves an empty partition")
    present = set(np.unique(table.plateau_index).tolist())
    missing = (plan.train_steps | plan.test_steps | plan.excluded_steps) - present
    if missing:
        raise DataError(f"plateau ordinals {sorted(missing)} are not in the table")
    return SplitPair(
        reduce_by_plateau(table, reduction, plan.train_steps),
        reduce_by_plateau(table, reduction, plan.test_steps),
    )

"""NMSE scoring, the reduction x split x model grid, and health-state checks."""

from __future__ import annotations

import logging
import multiprocessing
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from fanwatch import forest, linreg
from fanwatch.core import AlignedTable, DataError, Dataset, RawRecording, SplitPair
from fanwatch.preprocess import (
    ALL,
    MEAN,
    MEAN_STD,
    BinConfig,
    Binning,
    Downsample,
    Reduction,
    forward_fill_align,
    remove_ascends,
)
from fanwatch.splits import PartitionPlan, partitioned_split, reduce_by_plateau, shuffled_split

log = logging.getLogger(__name__)

DOWNSAMPLE_FRACTIONS = (0.5, 0.25, 0.1, 0.01, 0.001, 0.0001)
BASELINE = Downsample(1.0)
BIN_SIZES = (100, 500, 1000, 2500, 5000, 10000, 50000)
FEATURE_SETS = (MEAN, MEAN_STD, ALL)
SPLITS = ("shuffled", "partitioned")
MODELS = ("lr", "rf")


def nmse(predicted, actual) -> float:
    """Mean squared error over the population variance of ``actual``."""
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise DataError(f"length mismatch: {p.size} predictions for {a.size} values")
    if a.size == 0:
        raise DataError("nmse of an empty sequence")
    var = np.var(a)
    if not var > 0:
        raise DataError("actual values have zero variance")
    return float(np.mean((p - a) ** 2) / var)


def predict(model, features) -> np.ndarray:
    if isinstance(model, linreg.LinearModel):
        return linreg.predict(model, features)
    if isinstance(model, forest.ForestModel):
        return forest.predict(model, features)
    return np.asarray(model.predict(features), dtype=np.float64)


def evaluate(model, split: SplitPair) -> tuple[float, float]:
    """(train NMSE, test NMSE) of an already fitted model."""
    return (
        nmse(predict(model, split.train.features), split.train.target),
        nmse(predict(model, split.test.features), split.test.target),
    )


def default_reductions(baseline: bool = False) -> list[Reduction]:
    """Six downsampling fractions, then 7 bin sizes x 3 feature sets.

    ``baseline`` prepends the unreduced data (fraction 1.0).
    """
    out: list[Reduction] = [BASELINE] if baseline else []
    out += [Downsample(f) for f in DOWNSAMPLE_FRACTIONS]
    out += [Binning(BinConfig(s, fs)) for s in BIN_SIZES for fs in FEATURE_SETS]
    return out


@dataclass(frozen=True)
class GridConfig:
    reductions: tuple = field(default_factory=lambda: tuple(default_reductions()))
    splits: tuple[str, ...] = SPLITS
    models: tuple[str, ...] = MODELS
    forest: forest.ForestParams = field(default_factory=forest.ForestParams)
    plan: PartitionPlan = field(default_factory=PartitionPlan)
    ratio: float = 0.67
    master_seed: int = 0
    jobs: int = 1
    health_config: str = "bin-5000-all"

    def __post_init__(self):
        object.__setattr__(self, "reductions", tuple(self.reductions))
        bad = set(self.splits) - set(SPLITS)
        if bad:
            raise ValueError(f"unknown splits {sorted(bad)}")
        bad = set(self.models) - set(MODELS)
        if bad:
            raise ValueError(f"unknown models {sorted(bad)}")

    def cells(self) -> list[tuple[Reduction, str, str]]:
        return [(r, s, m) for r in self.reductions for s in self.splits for m in self.models]


def cell_key(config_id: str, split: str, model: str) -> str:
    return f"{config_id}/{split}/{model}"


def cell_seed(master_seed: int, config_id: str, split: str, model: str) -> int:
    """32-bit seed of one grid cell, independent of evaluation order."""
    tag = zlib.crc32(cell_key(config_id, split, model).encode())
    return int(np.random.SeedSequence([master_seed, tag]).generate_state(1)[0])


@dataclass(frozen=True)
class ReportRow:
    config_id: str
    reduction: str
    split: str
    model: str
    nmse_train: float
    nmse_test: float
    n_train: int
    n_test: int
    seed: int
    status: str = "ok"
    nmse_healthy: float = float("nan")
    nmse_damaged: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def health_ratio(self) -> float:
        if self.nmse_healthy > 0:
            return self.nmse_damaged / self.nmse_healthy
        return float("nan")


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple[ReportRow, ...]
    master_seed: int
    health: HealthReport | None = None

    def __len__(self):
        return len(self.rows)

    def find(self, config_id: str, split: str, model: str) -> ReportRow:
        for row in self.rows:
            if (row.config_id, row.split, row.model) == (config_id, split, model):
                return row
        raise KeyError(cell_key(config_id, split, model))


@dataclass(frozen=True)
class HealthReport:
    nmse_healthy: float
    nmse_damaged: float
    config_id: str
    model: str
    split: str = "shuffled"
    healthy_pairs: np.ndarray | None = field(default=None, compare=False, repr=False)
    damaged_pairs: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def ratio(self) -> float:
        if self.nmse_healthy > 0:
            return self.nmse_damaged / self.nmse_healthy
        return float("inf") if self.nmse_damaged > 0 else 1.0


def health_eval(model, healthy_ds: Dataset, damaged_ds: Dataset, config_id: str = "",
                model_name: str = "", split: str = "shuffled") -> HealthReport:
    """Score a healthy-trained model on whole healthy and damaged datasets."""
    if healthy_ds.column_names != damaged_ds.column_names:
        raise DataError("healthy and damaged datasets have different columns")
    ph = predict(model, healthy_ds.features)
    pd_ = predict(model, damaged_ds.features)
    return HealthReport(
        nmse(ph, healthy_ds.target),
        nmse(pd_, damaged_ds.target),
        config_id,
        model_name or _model_name(model),
        split,
        np.column_stack([healthy_ds.target, ph]),
        np.column_stack([damaged_ds.target, pd_]),
    )


def _model_name(model) -> str:
    return "lr" if isinstance(model, linreg.LinearModel) else "rf"


def prepare_table(rec: RawRecording) -> AlignedTable:
    """Align to the gyro grid and drop the ascends."""
    return remove_ascends(forward_fill_align(rec))


def build_split(table: AlignedTable, reduction: Reduction, split: str, seed: int,
                plan: PartitionPlan, ratio: float = 0.67) -> SplitPair:
    if split == "shuffled":
        return shuffled_split(reduction.apply(table), ratio, seed)
    return partitioned_split(table, plan, reduction)


def whole_dataset(table: AlignedTable, reduction: Reduction, split: str,
                  plan: PartitionPlan | None = None) -> Dataset:
    """The dataset a cell's model is scored on in the health check.

    For the partitioned split that is the train and test plateaus together;
    excluded plateaus are not part of that dataset.
    """
    if split == "shuffled":
        return reduction.apply(table)
    plan = plan or PartitionPlan()
    return reduce_by_plateau(table, reduction, plan.train_steps | plan.test_steps)


def fit_model(name: str, ds: Dataset, params: forest.ForestParams, seed: int):
    if name == "lr":
        return linreg.fit_ols(ds)
    if name == "rf":
        return forest.fit_rf(ds, replace(params, seed=seed))
    raise ValueError(f"unknown model {name!r}")


def run_cell(table: AlignedTable, reduction: Reduction, split: str, model_name: str,
             cfg: GridConfig, damaged: AlignedTable | None = None) -> tuple[ReportRow, HealthReport | None]:
    seed = cell_seed(cfg.master_seed, reduction.config_id, split, model_name)
    base = dict(config_id=reduction.config_id, reduction=reduction.describe(), split=split,
                model=model_name, seed=seed)
    try:
        pair = build_split(table, reduction, split, seed, cfg.plan, cfg.ratio)
        model = fit_model(model_name, pair.train, cfg.forest, seed)
        tr, te = evaluate(model, pair)
        health = None
        extra = {}
        if damaged is not None:
            health = health_eval(model, whole_dataset(table, reduction, split, cfg.plan),
                                 whole_dataset(damaged, reduction, split, cfg.plan),
                                 reduction.config_id, model_name, split)
            extra = dict(nmse_healthy=health.nmse_healthy, nmse_damaged=health.nmse_damaged)
        row = ReportRow(nmse_train=tr, nmse_test=te, n_train=len(pair.train),
                        n_test=len(pair.test), **base, **extra)
        return row, health
    except (DataError, ValueError) as exc:
        log.info("cell %s failed: %s", cell_key(reduction.config_id, split, model_name), exc)
        status = "error: " + str(exc).replace(",", ";").replace("\n", " ")
        return ReportRow(nmse_train=float("nan"), nmse_test=float("nan"), n_train=0, n_test=0,
                         status=status, **base), None


_WORKER: dict = {}


def _init_worker(table, damaged, cfg):
    _WORKER.update(table=table, damaged=damaged, cfg=cfg)


def _run_indexed(index: int):
    cfg = _WORKER["cfg"]
    reduction, split, model_name = cfg.cells()[index]
    row, health = run_cell(_WORKER["table"], reduction, split, model_name, cfg, _WORKER["damaged"])
    keep = health if _is_health_cell(cfg, reduction, split, model_name) else None
    return index, row, keep


def _is_health_cell(cfg: GridConfig, reduction, split: str, model_name: str) -> bool:
    return reduction.config_id == cfg.health_config and split == "shuffled" and model_name == "rf"


def run_grid(healthy: RawRecording | AlignedTable, cfg: GridConfig | None = None,
             damaged: RawRecording | AlignedTable | None = None) -> ExperimentReport:
    """Run every (reduction, split, model) cell; failed cells carry a status.

    Rows come back in grid order whatever ``cfg.jobs`` is. When a damaged
    run is given each row also holds the healthy/damaged NMSE of its model,
    and the report keeps the full health check of ``cfg.health_config``.
    """
    cfg = cfg or GridConfig()
    table = healthy if isinstance(healthy, AlignedTable) else prepare_table(healthy)
    dtable = None
    if damaged is not None:
        dtable = damaged if isinstance(damaged, AlignedTable) else prepare_table(damaged)
    n = len(cfg.cells())
    results: list = [None] * n
    if cfg.jobs > 1 and n > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=cfg.jobs, mp_context=ctx, initializer=_init_worker,
                                 initargs=(table, dtable, cfg)) as pool:
            for index, row, health in pool.map(_run_indexed, range(n)):
                results[index] = (row, health)
    else:
        _init_worker(table, dtable, cfg)
        try:
            for index in range(n):
                _, row, health = _run_indexed(index)
                results[index] = (row, health)
        finally:
            _WORKER.clear()
    health = next((h for _, h in results if h is not None), None)
    return ExperimentReport(tuple(r for r, _ in results), cfg.master_seed, health)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fanwatch import formats
from fanwatch.core import DataError, Dataset, SplitPair
from fanwatch.evaluation import (
    BASELINE,
    GridConfig,
    cell_seed,
    default_reductions,
    evaluate,
    fit_model,
    health_eval,
    nmse,
    prepare_table,
    run_grid,
    whole_dataset,
)
from fanwatch.forest import ForestParams
from fanwatch.linreg import fit_ols
from fanwatch.preprocess import parse_reduction
from fanwatch.splits import shuffled_split
from fanwatch.synthgen import ImpellerProfile, ScheduleConfig, generate_run


def test_nmse_examples():
    a = np.array([1.0, 4.0, 2.0, 8.0, 5.0])
    assert nmse(a, a) == 0.0
    assert nmse(np.full(5, a.mean()), a) == pytest.approx(1.0, abs=1e-12)
    var = sum((v - 4.0) ** 2 for v in a) / 5  # mean is 4
    assert nmse(a + 1.5, a) == pytest.approx(1.5 ** 2 / var, rel=1e-12)


def test_nmse_errors():
    with pytest.raises(DataError):
        nmse([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(DataError):
        nmse([1.0, 2.0], [3.0, 3.0])
    with pytest.raises(DataError):
        nmse([], [])


vals = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=40)


@given(vals, st.floats(-1e3, 1e3), st.floats(0.01, 100).map(lambda s: s), st.booleans(), st.integers(0, 999))
def test_nmse_affine_invariance(actual, shift, scale, flip, seed):
    a = np.array(actual)
    if np.var(a) < 1e-6:
        return
    p = a + np.random.default_rng(seed).normal(size=len(a))
    s = -scale if flip else scale
    assert nmse(p * s + shift, a * s + shift) == pytest.approx(nmse(p, a), rel=1e-9, abs=1e-12)


def _ds(x, y):
    x = np.asarray(x, float).reshape(len(y), -1)
    return Dataset(x, y, [f"c{i}" for i in range(x.shape[1])], np.arange(len(y)))


def test_evaluate_exact_linear():
    x = np.linspace(0, 1, 30)
    pair = shuffled_split(_ds(x, 3 * x - 2), seed=1)
    tr, te = evaluate(fit_ols(pair.train), pair)
    assert tr == pytest.approx(0, abs=1e-12) and te == pytest.approx(0, abs=1e-12)


def test_evaluate_mean_stub():
    class Mean:
        def __init__(self, v):
            self.v = v

        def predict(self, x):
            return np.full(len(x), self.v)

    rng = np.random.default_rng(0)
    pair = shuffled_split(_ds(rng.normal(size=300), rng.normal(size=300)), seed=2)
    tr, te = evaluate(Mean(pair.train.target.mean()), pair)
    assert tr == pytest.approx(1.0, abs=1e-12)
    assert te == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("seed", range(5))
def test_rf_overfits(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(400, 4))
    y = x[:, 0] + rng.normal(size=400)
    pair = shuffled_split(_ds(x, y), seed=seed)
    tr, te = evaluate(fit_model("rf", pair.train, ForestParams(), seed), pair)
    assert tr < 0.3 and te > tr


def test_default_grid_shape():
    reds = default_reductions()
    assert len(reds) == 27
    assert len(GridConfig().cells()) == 108
    assert default_reductions(baseline=True)[0] == BASELINE


def test_cell_seed_stable():
    assert cell_seed(1, "ds-0.5", "shuffled", "rf") == cell_seed(1, "ds-0.5", "shuffled", "rf")
    assert cell_seed(1, "ds-0.5", "shuffled", "rf") != cell_seed(2, "ds-0.5", "shuffled", "rf")
    assert cell_seed(1, "ds-0.5", "shuffled", "rf") != cell_seed(1, "ds-0.5", "shuffled", "lr")


def test_single_cell_baseline(small_run):
    cfg = GridConfig(reductions=[BASELINE], splits=("shuffled",), models=("lr",), master_seed=1)
    report = run_grid(small_run, cfg)
    assert len(report) == 1
    row = report.rows[0]
    assert row.ok and row.config_id == "ds-1"
    # the gyro signal explains much of the speed but noise keeps LR far from perfect
    assert 0.05 < row.nmse_test < 0.95


def test_full_grid_rows_and_failures(small_run):
    report = run_grid(small_run, GridConfig(forest=ForestParams(n_trees=3)))
    assert len(report) == 108
    failed = [r for r in report.rows if not r.ok]
    assert failed and all(r.status.startswith("error:") for r in failed)
    assert {r.config_id for r in failed} <= {f"bin-{s}-{f}" for s in (2500, 5000, 10000, 50000)
                                             for f in ("mean", "mean_std", "all")} | {"ds-0.0001"}
    ok = [r for r in report.rows if r.ok]
    assert all(np.isfinite(r.nmse_test) and r.nmse_test >= 0 for r in ok)


def test_grid_determinism_and_jobs(small_run, small_damaged_run):
    reds = [parse_reduction(r) for r in ("ds-0.1", "bin-500-all", "bin-1000-mean")]
    cfg = GridConfig(reductions=reds, forest=ForestParams(n_trees=5), master_seed=3,
                     health_config="bin-500-all")
    a = run_grid(small_run, cfg, small_damaged_run)
    b = run_grid(small_run, cfg, small_damaged_run)
    from dataclasses import replace
    c = run_grid(small_run, replace(cfg, jobs=3), small_damaged_run)
    lines = [formats.report_lines(r.rows) for r in (a, b, c)]
    assert lines[0] == lines[1] == lines[2]
    assert a.health is not None and a.health.config_id == "bin-500-all"
    assert c.health == a.health


def test_health_identity(small_run):
    table = prepare_table(small_run)
    red = parse_reduction("bin-500-mean")
    ds = whole_dataset(table, red, "shuffled")
    h = health_eval(fit_ols(ds), ds, ds, red.config_id, "lr")
    assert h.ratio == 1.0
    assert h.healthy_pairs.shape == (len(ds), 2)
    other = Dataset(ds.features[:, :3], ds.target, ds.column_names[:3], ds.row_provenance)
    with pytest.raises(DataError):
        health_eval(fit_ols(ds), ds, other)


def test_damage_response_monotone():
    sched = ScheduleConfig()
    base = ImpellerProfile()
    table = prepare_table(generate_run(sched, base, seed=0))
    for config_id, name in (("bin-5000-all", "rf"), ("bin-2500-mean", "lr")):
        red = parse_reduction(config_id)
        healthy = whole_dataset(table, red, "shuffled")
        pair = shuffled_split(healthy, seed=cell_seed(0, config_id, "shuffled", name))
        model = fit_model(name, pair.train, ForestParams(), cell_seed(0, config_id, "shuffled", name))
        scores = []
        for scale in (1, 2, 3, 5):
            damaged = prepare_table(generate_run(sched, base.damaged(scale), seed=0, impeller="damaged"))
            scores.append(health_eval(model, healthy, whole_dataset(damaged, red, "shuffled")).nmse_damaged)
        assert scores == sorted(scores), (config_id, scores)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanwatch.core import ConfigError, DataError, Dataset
from fanwatch.forest import ForestModel, ForestParams, RegressionTree, fit_rf, fit_tree, predict

FULL = ForestParams(n_trees=1, feature_fraction=1.0, bootstrap=False)


def _ds(x, y):
    x = np.asarray(x, dtype=float)
    return Dataset(x, y, [f"c{i}" for i in range(x.shape[1])], np.arange(len(y)))


def _tree(x, y, params=FULL, seed=0):
    return fit_tree(np.asarray(x, float), np.asarray(y, float), params, np.random.default_rng(seed))


def test_two_points():
    t = _tree([[0.0], [1.0]], [0.0, 10.0])
    assert t.feature[0] == 0 and t.threshold[0] == 0.5
    assert t.predict([[0.2], [0.5], [0.7]]).tolist() == [0.0, 0.0, 10.0]
    model = fit_rf(_ds([[0.0], [1.0]], [0.0, 10.0]), FULL)
    assert predict(model, [[-1.0], [0.49], [0.51], [3.0]]).tolist() == [0.0, 0.0, 10.0, 10.0]


def test_constant_target():
    x = np.random.default_rng(0).normal(size=(30, 3))
    t = _tree(x, np.full(30, 4.2))
    assert len(t) == 1 and t.value[0] == 4.2
    model = fit_rf(_ds(x, np.full(30, 4.2)), ForestParams(n_trees=5, seed=3))
    assert np.all(predict(model, x * 3) == 4.2)


def _sse(y):
    return float(np.sum((y - y.mean()) ** 2)) if len(y) else 0.0


def brute_root(x, y):
    """Lowest summed child SSE over every feature and midpoint threshold."""
    best = _sse(y)
    for f in range(x.shape[1]):
        vals = np.unique(x[:, f])
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2
            left = x[:, f] <= thr
            best = min(best, _sse(y[left]) + _sse(y[~left]))
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.integers(1, 3), st.integers(0, 10_000))
def test_root_split_matches_exhaustive(n, p, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 5, size=(n, p)).astype(float)
    y = rng.normal(size=n).round(3)
    t = _tree(x, y, ForestParams(n_trees=1, feature_fraction=1.0, bootstrap=False, max_depth=1))
    if len(t) == 1:
        got = _sse(y)
    else:
        left = x[:, t.feature[0]] <= t.threshold[0]
        got = _sse(y[left]) + _sse(y[~left])
    assert got == pytest.approx(brute_root(x, y), rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 80), st.integers(1, 4), st.integers(0, 10_000))
def test_full_tree_interpolates(n, p, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    t = _tree(x, y)
    np.testing.assert_array_equal(t.predict(x), y)


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 80), st.integers(1, 6), st.integers(0, 10_000))
def test_tree_structure(n, min_leaf, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 6, size=(n, 3)).astype(float)
    y = rng.normal(size=n)
    if n < min_leaf:
        return
    t = _tree(x, y, ForestParams(n_trees=1, min_leaf=min_leaf, bootstrap=False), seed)
    leaves = t.feature < 0
    assert np.all(t.count[leaves] >= min_leaf)
    assert t.count[leaves].sum() == n
    internal = np.flatnonzero(~leaves)
    children = np.concatenate([t.left[internal], t.right[internal]])
    assert sorted(children.tolist()) == list(range(1, len(t)))


def test_determinism_and_single_tree():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(200, 6))
    y = x[:, 0] * 3 + rng.normal(size=200)
    params = ForestParams(n_trees=7, seed=11)
    a, b = fit_rf(_ds(x, y), params), fit_rf(_ds(x, y), params)
    np.testing.assert_array_equal(predict(a, x), predict(b, x))
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.threshold, tb.threshold)
    one = fit_rf(_ds(x, y), ForestParams(n_trees=1, seed=5))
    np.testing.assert_array_equal(predict(one, x), one.trees[0].predict(x))
    other = fit_rf(_ds(x, y), ForestParams(n_trees=7, seed=12))
    assert not np.array_equal(predict(other, x), predict(a, x))


def _stub(value):
    return RegressionTree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]),
                          np.array([value]), np.array([1]))


def test_stub_average():
    model = ForestModel((_stub(0.0), _stub(10.0)), ForestParams(n_trees=2), ["a"])
    assert predict(model, [[1.0], [2.0]]).tolist() == [5.0, 5.0]
    with pytest.raises(DataError):
        predict(model, np.ones((1, 2)))
    with pytest.raises(DataError):
        ForestModel((_stub(0.0),), ForestParams(n_trees=2), ["a"])


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 100), st.integers(0, 10_000))
def test_predictions_within_target_range(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 4))
    y = rng.normal(size=n) * 50
    model = fit_rf(_ds(x, y), ForestParams(n_trees=5, seed=seed))
    p = predict(model, rng.normal(size=(50, 4)) * 3)
    assert p.min() >= y.min() and p.max() <= y.max()


@settings(max_examples=20, deadline=None)
@given(st.integers(60, 150), st.integers(2, 5), st.integers(0, 10_000))
def test_column_permutation(n, p, seed):
    # equal-gain ties are broken by column index, so keep nodes large enough
    # that two columns never induce the same best partition
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    perm = rng.permutation(p)
    params = ForestParams(n_trees=3, feature_fraction=1.0, min_leaf=10, max_depth=3, seed=seed)
    a = fit_rf(_ds(x, y), params)
    b = fit_rf(_ds(x[:, perm], y), params)
    for ta, tb in zip(a.trees, b.trees):
        mapped = np.where(tb.feature >= 0, perm[np.maximum(tb.feature, 0)], -1)
        np.testing.assert_array_equal(mapped, ta.feature)
        np.testing.assert_array_equal(ta.threshold, tb.threshold)
    q = rng.normal(size=(20, p))
    # leaf means are summed in a column-dependent row order: equal up to rounding
    np.testing.assert_allclose(predict(a, q), predict(b, q[:, perm]), rtol=1e-12, atol=1e-14)


def test_params():
    p = ForestParams()
    assert (p.n_trees, p.row_fraction, p.feature_fraction, p.min_leaf, p.max_depth) == (50, 0.66, 0.33, 1, None)
    assert p.features_per_split(24) == 8
    assert p.features_per_split(2) == 1
    assert p.rows_per_tree(100) == 66
    for bad in (dict(n_trees=0), dict(row_fraction=0.0), dict(feature_fraction=1.5),
                dict(min_leaf=0), dict(max_depth=0)):
        with pytest.raises(ConfigError):
            ForestParams(**bad)
    with pytest.raises(DataError):
        fit_rf(_ds(np.empty((0, 1)), []), p)


def test_overfits_no_duplicates():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(300, 5))
    y = x[:, 0] + rng.normal(size=300)
    model = fit_rf(_ds(x, y), ForestParams(n_trees=1, feature_fraction=1.0, bootstrap=False))
    assert np.all(predict(model, x) == y)
    assert model.trees[0].n_leaves == 300

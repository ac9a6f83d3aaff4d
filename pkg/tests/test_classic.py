from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from candlecast.classic import (
    DOWN,
    UP,
    DecisionTree,
    ForestClassifier,
    KdTree,
    KnnClassifier,
    _best_split,
    decode_model,
    encode_model,
    forest_fit,
    forest_predict,
    knn_classify,
    load_model,
    save_model,
)
from candlecast.errors import CheckpointError, ContractError


def linear_scan(points, q, k):
    p = points.astype(np.float64)
    d2 = ((p - q.astype(np.float64)) ** 2).sum(axis=1)
    order = sorted(range(len(p)), key=lambda i: (d2[i], i))[:k]
    return [(float(np.sqrt(d2[i])), i) for i in order]


# --- K-D tree ----------------------------------------------------------------


def test_single_point_is_leaf_root():
    t = KdTree(np.array([[1.0, 2.0]]))
    assert t.is_leaf_root
    assert t.query(np.array([0.0, 0.0]), 1) == [(pytest.approx(np.sqrt(5)), 0)]


def test_three_points_median_split():
    t = KdTree(np.array([[0.0, 0.0], [5.0, 0.1], [2.0, 0.0]]), leaf_size=1)
    root = t.nodes[0]
    assert root["axis"] == 0 and root["threshold"] == 2.0 and root["left_max"] == 0.0
    assert t.query(np.array([2.1, 0.0]), 1)[0][1] == 2


def test_empty_and_bad_k():
    with pytest.raises(ContractError):
        KdTree(np.zeros((0, 3)))
    t = KdTree(np.zeros((4, 3)))
    with pytest.raises(ContractError):
        t.query(np.zeros(3), 5)
    with pytest.raises(ContractError):
        t.query(np.zeros(2), 1)


def test_self_query_500(rng):
    pts = rng.random((500, 6)).astype(np.float32)
    t = KdTree(pts)
    for i in range(500):
        d, j = t.query(pts[i], 1)[0]
        assert d == 0.0 and j == i


@pytest.mark.parametrize("d, k", list(product((4, 400), (1, 5))))
def test_matches_linear_scan(rng, d, k):
    pts = rng.random((300, d)).astype(np.float32)
    t = KdTree(pts)
    for q in rng.random((20, d)).astype(np.float32):
        got = t.query(q, k)
        want = linear_scan(pts, q, k)
        assert [i for _, i in got] == [i for _, i in want]
        assert np.allclose([x for x, _ in got], [x for x, _ in want])


@settings(max_examples=40)
@given(
    st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60),
    st.tuples(st.integers(-1, 5), st.integers(-1, 5)),
    st.integers(1, 8),
    st.integers(1, 5),
)
def test_matches_linear_scan_with_ties(points, q, k, leaf):
    # small integer grid forces many equal distances
    pts = np.array(points, dtype=np.float32)
    q = np.array(q, dtype=np.float32)
    k = min(k, len(pts))
    assert KdTree(pts, leaf).query(q, k) == [(pytest.approx(x), i) for x, i in linear_scan(pts, q, k)]


def test_identical_points_form_one_leaf():
    t = KdTree(np.ones((40, 3)), leaf_size=4)
    assert t.is_leaf_root
    assert [i for _, i in t.query(np.ones(3), 3)] == [0, 1, 2]


def test_knn_separable_four_points():
    pts = np.array([[0, 0], [0, 1], [10, 10], [10, 11]], dtype=np.float32)
    labels = np.array([DOWN, DOWN, UP, UP])
    t = KdTree(pts)
    assert knn_classify(t, labels, np.array([0.2, 0.5]), 1)[0] == DOWN
    assert knn_classify(t, labels, np.array([9.5, 10.5]), 1)[0] == UP
    assert knn_classify(t, labels, np.array([9.5, 10.5]), 3)[0] == UP


def test_knn_tie_is_down():
    pts = np.array([[0.0], [1.0]], dtype=np.float32)
    assert knn_classify(KdTree(pts), np.array([UP, DOWN]), np.array([0.5]), 2)[0] == DOWN


def test_knn_classifier_flattens_images(rng):
    x = rng.random((30, 4, 4, 3)).astype(np.float32)
    y = rng.integers(0, 2, 30)
    m = KnnClassifier(k=1).fit(x, y)
    labels, frac = m.predict(x)
    assert np.array_equal(labels, y) and np.array_equal(frac, y.astype(float))


# --- Gini split ------------------------------------------------------------


def gini_oracle(x, y, features):
    """Exhaustive search with exact rational arithmetic."""
    best = None
    n = len(y)
    for f in features:
        for t in sorted(set(x[:, f].tolist())):
            left = [int(v) for v, xv in zip(y, x[:, f]) if xv <= t]
            right = [int(v) for v, xv in zip(y, x[:, f]) if xv > t]
            if not left or not right:
                continue

            def g(part):
                p = Fraction(sum(part), len(part))
                return 1 - p * p - (1 - p) * (1 - p)

            w = Fraction(len(left), n) * g(left) + Fraction(len(right), n) * g(right)
            key = (w, int(f), t)
            if best is None or key < best:
                best = key
    return None if best is None else (best[1], best[2])


@settings(max_examples=60)
@given(st.data())
def test_best_split_matches_exhaustive(data):
    n = data.draw(st.integers(2, 14))
    d = data.draw(st.integers(1, 4))
    x = np.array(data.draw(st.lists(st.lists(st.integers(0, 3), min_size=d, max_size=d), min_size=n, max_size=n)), dtype=float)
    y = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    feats = np.arange(d)
    assert _best_split(x, y, feats) == gini_oracle(x, y, feats)


def test_tree_fits_training_set(rng):
    x = rng.random((80, 5))
    y = (x[:, 0] + x[:, 3] > 1).astype(int)
    assert np.array_equal(DecisionTree().fit(x, y).predict(x), y)


def test_tree_min_samples_and_depth():
    x = np.arange(10.0)[:, None]
    y = np.array([0, 1] * 5)
    assert len(DecisionTree(max_depth=0).fit(x, y).nodes) == 1
    assert len(DecisionTree(min_samples_split=11).fit(x, y).nodes) == 1


# --- forest ------------------------------------------------------------------


def test_forest_reduces_to_single_tree(rng):
    x = rng.random((60, 7))
    y = rng.integers(0, 2, 60)
    forest = forest_fit(x, y, n_trees=1, bootstrap=False, max_features=None)
    tree = DecisionTree().fit(x, y)
    assert np.array_equal(forest.trees[0].nodes, tree.nodes)
    q = rng.random((40, 7))
    assert np.array_equal(forest.predict(q)[0], tree.predict(q))


def test_forest_deterministic(rng):
    x = rng.random((50, 16))
    y = rng.integers(0, 2, 50)
    a, b = forest_fit(x, y, 10, seed=3), forest_fit(x, y, 10, seed=3)
    assert a.seeds == b.seeds
    assert all(np.array_equal(s.nodes, t.nodes) for s, t in zip(a.trees, b.trees))
    assert encode_model(a) == encode_model(b)
    assert forest_fit(x, y, 10, seed=4).seeds != a.seeds


def test_forest_vote_tie_is_down():
    x = np.array([[0.0], [1.0]])
    y = np.array([0, 1])
    forest = forest_fit(x, y, n_trees=2, bootstrap=False, max_features=None)
    forest.trees[1].nodes = forest.trees[1].nodes.copy()
    # flip the second tree's leaves so the two trees disagree everywhere
    n = forest.trees[1].nodes
    n["up"], n["down"] = n["down"].copy(), n["up"].copy()
    label, frac = forest_predict(forest, np.array([1.0]))
    assert label == DOWN and frac == 0.5


def test_forest_predict_fraction_is_for_returned_label(rng):
    x = rng.random((40, 4))
    y = (x[:, 0] > 0.5).astype(int)
    forest = forest_fit(x, y, 25, seed=1)
    labels, up = forest.predict(x)
    for i in range(5):
        label, frac = forest_predict(forest, x[i])
        assert label == labels[i]
        assert frac == (up[i] if label == UP else 1 - up[i])
        assert frac >= 0.5


def test_forest_single_class_is_degenerate():
    forest = forest_fit(np.random.default_rng(0).random((10, 3)), np.ones(10, int), 3)
    assert forest.degenerate
    assert forest_predict(forest, np.zeros(3)) == (UP, 1.0)


def test_forest_needs_two_samples():
    with pytest.raises(ContractError):
        forest_fit(np.zeros((1, 3)), np.zeros(1, int))


# --- CFM1 --------------------------------------------------------------------


def test_forest_model_round_trip(tmp_path, rng):
    x = rng.random((40, 9)).astype(np.float32)
    y = rng.integers(0, 2, 40)
    m = ForestClassifier(7, seed=2).fit(x, y)
    save_model(m, tmp_path / "m.cfm")
    back = load_model(tmp_path / "m.cfm")
    q = rng.random((25, 9)).astype(np.float32)
    assert all(np.array_equal(a, b) for a, b in zip(m.predict(q), back.predict(q)))
    assert back.forest.seeds == m.forest.seeds
    assert encode_model(back) == encode_model(m)


def test_knn_model_round_trip(tmp_path, rng):
    x = rng.random((70, 3, 3, 3)).astype(np.float32)
    y = rng.integers(0, 2, 70)
    m = KnnClassifier(5, leaf_size=4).fit(x, y)
    save_model(m, tmp_path / "m.cfm")
    back = load_model(tmp_path / "m.cfm")
    q = rng.random((20, 3, 3, 3)).astype(np.float32)
    assert all(np.array_equal(a, b) for a, b in zip(m.predict(q), back.predict(q)))
    assert encode_model(back) == encode_model(m)


def test_model_corruption(rng):
    m = KnnClassifier(1).fit(rng.random((5, 2)), np.array([0, 1, 0, 1, 1]))
    data = encode_model(m)
    with pytest.raises(CheckpointError, match="truncated"):
        decode_model(data[:-3])
    with pytest.raises(CheckpointError, match="trailing"):
        decode_model(data + b"\0")
    with pytest.raises(CheckpointError):
        decode_model(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError):
        load_model("/nonexistent/model.cfm")

import math

import numpy as np
import pytest

import memdstate.ensemble as ens_mod
from memdstate.ensemble import (BoostedEnsemble, BoostParams, ForestParams, RoundResult,
                                TreeParams, adaboost_alpha, boost_round, evaluate, reweight,
                                score_predictions, train_boosted, train_forest, train_tree)
from memdstate.errors import ValidationError


def blobs(rng, m=200, margin=4.0):
    half = m // 2
    X = np.vstack([rng.normal(-margin / 2, 0.5, (half, 2)), rng.normal(margin / 2, 0.5, (half, 2))])
    y = np.r_[-np.ones(half), np.ones(half)].astype(int)
    return X, y


def noisy(rng, m=120, d=6):
    X = rng.standard_normal((m, d))
    y = np.where(X[:, 0] + rng.standard_normal(m) > 0, 1, -1)
    return X, y


class Fixed:
    """Estimator stub that always returns the given labels."""

    def __init__(self, labels):
        self.labels = np.asarray(labels)

    def predict(self, X):
        return np.resize(self.labels, len(X))


# trees

def _gini_oracle(x, y, w):
    best = None
    xs = np.unique(x)
    for lo, hi in zip(xs[:-1], xs[1:]):
        thr = (lo + hi) / 2
        score = 0.0
        for side in (x <= thr, x > thr):
            ws = w[side].sum()
            p = w[side & (y > 0)].sum() / ws
            score += ws * (1 - p ** 2 - (1 - p) ** 2)
        if best is None or score < best[0]:
            best = (score, thr)
    return best[1]


def test_tree_threshold_in_gap(rng):
    x = np.r_[rng.uniform(-3, -0.5, 20), rng.uniform(0.5, 3, 20)]
    y = np.where(x >= 0, 1, -1)
    tree = train_tree(x[:, None], y, params=TreeParams(max_depth=1, min_samples_leaf=1))
    thr = tree.threshold[0]
    assert x[y < 0].max() < thr < x[y > 0].min()
    assert thr == pytest.approx(_gini_oracle(x, y, np.full(40, 1 / 40)))
    np.testing.assert_array_equal(tree.predict(x[:, None]), y)


def test_tree_matches_brute_force_on_overlapping_data(rng):
    x = rng.standard_normal(60)
    y = np.where(x + 0.8 * rng.standard_normal(60) > 0, 1, -1)
    w = rng.uniform(0.1, 1, 60)
    w /= w.sum()
    tree = train_tree(x[:, None], y, w, TreeParams(max_depth=1, min_samples_leaf=1))
    assert tree.threshold[0] == pytest.approx(_gini_oracle(x, y, w))


def test_tree_pure_node_single_leaf(rng):
    X = rng.standard_normal((10, 3))
    tree = train_tree(X, np.ones(10, dtype=int))
    assert tree.node_count == 1
    assert np.all(tree.predict(rng.standard_normal((5, 3))) == 1)


def test_tree_weight_on_single_sample(rng):
    X = rng.standard_normal((10, 2))
    y = np.r_[np.ones(5), -np.ones(5)].astype(int)
    w = np.zeros(10)
    w[7] = 1.0
    tree = train_tree(X, y, w)
    assert tree.predict(X[7:8])[0] == -1


def test_tree_respects_limits(rng):
    X, y = noisy(rng, 200)
    tree = train_tree(X, y, params=TreeParams(max_depth=3, min_samples_leaf=5))
    leaves = tree.leaf_ids(X)
    assert np.bincount(leaves).max() > 0
    counts = np.bincount(leaves, minlength=tree.node_count)
    assert all(counts[i] >= 5 for i in np.unique(leaves))
    # depth via parent walk
    depth = np.zeros(tree.node_count, dtype=int)
    for i in range(tree.node_count):
        for child in (tree.left[i], tree.right[i]):
            if child >= 0:
                depth[child] = depth[i] + 1
    assert depth.max() <= 3
    # internal nodes have children, votes add up
    internal = tree.feature >= 0
    assert np.all(tree.left[internal] >= 0) and np.all(tree.right[internal] >= 0)
    np.testing.assert_allclose(tree.votes[internal].sum(axis=1),
                               tree.votes[tree.left[internal]].sum(axis=1)
                               + tree.votes[tree.right[internal]].sum(axis=1))


def test_tree_rejects_bad_input():
    with pytest.raises(ValidationError):
        train_tree(np.empty((0, 2)), np.empty(0, dtype=int))
    with pytest.raises(ValidationError):
        train_tree(np.zeros((3, 1)), np.array([0, 1, 1]))


# forests

def test_forest_single_tree_equals_tree(rng):
    X, y = noisy(rng)
    f = train_forest(X, y, ForestParams(trees_count=1, seed=3))
    np.testing.assert_array_equal(f.predict(X), f.trees[0].predict(X))


def test_forest_identical_trees(rng):
    X, y = noisy(rng)
    f = train_forest(X, y, ForestParams(trees_count=5, bootstrap=False, features_per_split=X.shape[1]))
    for t in f.trees[1:]:
        np.testing.assert_array_equal(t.threshold, f.trees[0].threshold)
    np.testing.assert_array_equal(f.predict(X), f.trees[0].predict(X))


def test_forest_blobs_accuracy(rng):
    X, y = blobs(rng)
    f = train_forest(X, y, ForestParams(trees_count=25))
    assert np.mean(f.predict(X) == y) >= 0.98


def test_forest_tie_goes_positive(rng):
    X, y = noisy(rng)
    f = train_forest(X, y, ForestParams(trees_count=2, seed=1))
    votes = f.votes(X)
    assert np.all(f.predict(X)[votes == 0] == 1)


def test_forest_default_features_per_split():
    assert ForestParams().tree_params(10).features_per_split == 4
    assert ForestParams().tree_params(826).features_per_split == 29


# boosting math

def test_alpha_values():
    assert adaboost_alpha(0.5) == pytest.approx(0.0, abs=1e-12)
    assert adaboost_alpha(0.25) == pytest.approx(0.5 * math.log(3), abs=1e-12)
    assert math.isfinite(adaboost_alpha(0.0))


def test_hand_worked_update():
    y = np.array([1, 1, 1, 1])
    h = np.array([1, 1, -1, 1])
    w = np.full(4, 0.25)
    xi = w[h != y].sum()
    assert xi == 0.25
    w_next, z = reweight(w, y, h, adaboost_alpha(xi))
    np.testing.assert_allclose(w_next, [1 / 6, 1 / 6, 1 / 2, 1 / 6], atol=1e-12)
    assert z == pytest.approx(2 * math.sqrt(0.25 * 0.75))


def test_weight_conservation_and_emphasis(rng):
    X, y = noisy(rng, 150)
    w = np.full(150, 1 / 150)
    params = ForestParams(trees_count=3, max_depth=2)
    loss = 1.0
    for t in range(50):
        res = boost_round(X, y, w, ForestParams(**{**params.__dict__, "seed": t}))
        assert abs(res.weights.sum() - 1) <= 1e-12 and np.all(res.weights >= 0)
        if 0 < res.error < 0.5:
            wrong = res.estimator.predict(X) != y
            assert np.all(res.weights[wrong] > w[wrong])
            assert np.all(res.weights[~wrong] < w[~wrong])
            new_loss = loss * res.normalizer
            assert new_loss <= loss
            loss = new_loss
        w = res.weights


def test_first_round_uses_uniform_weights(rng):
    X, y = noisy(rng)
    e = train_boosted(X, y, BoostParams(1, ForestParams(trees_count=3, max_depth=1)))
    assert e.errors[0] == pytest.approx(np.mean(e.estimators[0].predict(X) != y))


def test_boosted_blobs_perfect(rng):
    X, y = blobs(rng)
    e = train_boosted(X, y, BoostParams(10))
    assert 1 <= e.rounds_trained <= 10
    assert np.mean(e.predict(X) == y) == 1.0


def test_single_round_equals_base(rng):
    X, y = noisy(rng)
    e = train_boosted(X, y, BoostParams(1, ForestParams(trees_count=5)))
    assert e.alphas[0] > 0
    np.testing.assert_array_equal(e.predict(X), e.estimators[0].predict(X))


def test_zero_error_stops_early(rng):
    X, y = blobs(rng)
    e = train_boosted(X, y, BoostParams(10, ForestParams(trees_count=5)))
    assert e.errors[-1] == 0.0 and e.rounds_trained < 10
    assert math.isfinite(e.alphas[-1])


def test_bad_round_retried_once_then_stop(rng, monkeypatch):
    X, y = noisy(rng, 20)
    seeds = []

    def fake_round(X, y, w, params):
        seeds.append(params.seed)
        return RoundResult(Fixed(-y), 0.0, w, 0.7, 1.0)

    monkeypatch.setattr(ens_mod, "boost_round", fake_round)
    with pytest.raises(ValidationError):
        train_boosted(X, y, BoostParams(5))
    assert len(seeds) == 2 and seeds[0] != seeds[1]


def test_boosted_errors(rng):
    with pytest.raises(ValidationError):
        train_boosted(rng.standard_normal((5, 2)), np.ones(5, dtype=int))


# prediction

def test_weighted_vote_arithmetic():
    e = BoostedEnsemble([Fixed([-1]), Fixed([1])], [0.9, 0.1], n_features=1)
    assert e.predict(np.zeros((1, 1)))[0] == -1
    tie = BoostedEnsemble([Fixed([-1]), Fixed([1])], [0.5, 0.5], n_features=1)
    assert tie.predict(np.zeros((1, 1)))[0] == 1
    agree = BoostedEnsemble([Fixed([1]), Fixed([1])], [0.2, 0.3], n_features=1)
    assert agree.predict(np.zeros((1, 1)))[0] == 1


def test_predict_matches_brute_force_sum(rng):
    X, y = noisy(rng)
    e = train_boosted(X, y, BoostParams(4, ForestParams(trees_count=5, max_depth=2)))
    P = rng.standard_normal((100, X.shape[1]))
    manual = []
    for p in P:
        s = 0.0
        for a, est in zip(e.alphas, e.estimators):
            s += a * est.predict(p[None, :])[0]
        manual.append(1 if s >= 0 else -1)
    np.testing.assert_array_equal(e.predict(P), manual)
    with pytest.raises(ValidationError):
        e.predict(P[:, :3])


def test_training_accuracy_roundtrip_and_determinism(rng, tmp_path):
    X, y = noisy(rng)
    params = BoostParams(5, ForestParams(trees_count=7, max_depth=3, seed=11))
    a = train_boosted(X, y, params)
    b = train_boosted(X, y, params)
    assert a.to_dict() == b.to_dict()
    assert a.training_accuracy == np.mean(a.predict(X) == y)
    a.save(tmp_path / "m.json")
    back = BoostedEnsemble.load(tmp_path / "m.json")
    P = rng.standard_normal((50, X.shape[1]))
    np.testing.assert_array_equal(back.predict(P), a.predict(P))
    np.testing.assert_array_equal(back.decision_function(P), a.decision_function(P))


def test_load_rejects_foreign_file(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other", "version": 1}')
    with pytest.raises(ValidationError):
        BoostedEnsemble.load(tmp_path / "x.json")


# evaluation

def test_evaluate_perfect_and_wrong():
    y = np.array([1, -1] * 5)
    r = evaluate(Fixed(y), np.zeros((10, 1)), y)
    assert r["accuracy"] == 1.0
    assert r["confusion"][0, 1] == 0 and r["confusion"][1, 0] == 0
    assert evaluate(Fixed(-y), np.zeros((10, 1)), y)["accuracy"] == 0.0
    with pytest.raises(ValidationError):
        evaluate(Fixed(y), np.zeros((0, 1)), y[:0])


def test_random_predictions_near_half():
    y = np.array([1, -1] * 50)
    inside = 0
    for seed in range(100):
        pred = np.random.default_rng(seed).choice([-1, 1], 100)
        inside += abs(score_predictions(y, pred)["accuracy"] - 0.5) <= 0.1
    assert inside >= 95

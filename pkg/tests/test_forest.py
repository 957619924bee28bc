"""From-scratch random forest: CART splits, imbalance modes, OOB, persistence."""
import json

import numpy as np
import pytest

from spectrees.core import rng_from
from spectrees.forest import (
    MODEL_VERSION,
    ClassTooSmall,
    DegenerateLabels,
    ForestConfig,
    LengthMismatch,
    NonFiniteFeature,
    RandomForest,
    _grow_tree,
    jitter_oversample,
)


def blobs(rng, means, n_per, scale=1.0):
    X = np.vstack([rng.normal(m, scale, (n_per, len(m))) for m in means])
    y = np.repeat(np.arange(1, len(means) + 1), n_per)
    return X, y


def separable(rng, n_per=100):
    """Two classes split cleanly by feature 0 at 0.5."""
    X = rng.random((2 * n_per, 4))
    X[:n_per, 0] = rng.uniform(0.0, 0.45, n_per)
    X[n_per:, 0] = rng.uniform(0.55, 1.0, n_per)
    y = np.repeat([1, 2], n_per)
    return X, y


def model_doc(trees, classes, n_features=1):
    return {
        "version": MODEL_VERSION,
        "config": {"n_trees": len(trees), "max_features": None,
                   "min_samples_leaf": 1, "max_depth": None,
                   "bootstrap": "balanced_bootstrap", "oversample_target": 125,
                   "seed": 0},
        "n_features": n_features,
        "classes": classes,
        "trees": trees,
    }


def leaf_tree(probs):
    return {"feature": [-1], "threshold": [None], "left": [-1], "right": [-1],
            "probs": [probs]}


def walk_tree(tree_doc, x):
    """Independent traversal of a serialized tree; returns its leaf probs."""
    i = 0
    while tree_doc["feature"][i] >= 0:
        if x[tree_doc["feature"][i]] <= tree_doc["threshold"][i]:
            i = tree_doc["left"][i]
        else:
            i = tree_doc["right"][i]
    return tree_doc["probs"][i]


class TestConfig:
    def test_defaults(self):
        cfg = ForestConfig()
        assert cfg.n_trees == 500
        assert cfg.min_samples_leaf == 1
        assert cfg.bootstrap == "balanced_bootstrap"
        assert cfg.oversample_target == 125

    @pytest.mark.parametrize("kw", [{"bootstrap": "smote"}, {"n_trees": 0},
                                    {"min_samples_leaf": 0}])
    def test_invalid_config_rejected(self, kw):
        with pytest.raises(ValueError):
            ForestConfig(**kw)


class TestFitValidation:
    def test_single_class_rejected(self, rng):
        X = rng.random((20, 3))
        with pytest.raises(DegenerateLabels):
            RandomForest(ForestConfig(n_trees=2)).fit(X, np.ones(20, dtype=int))

    def test_non_finite_features_rejected(self, rng):
        X = rng.random((20, 3))
        X[7, 1] = np.nan
        y = np.repeat([1, 2], 10)
        with pytest.raises(NonFiniteFeature):
            RandomForest(ForestConfig(n_trees=2)).fit(X, y)

    def test_length_mismatch_rejected(self, rng):
        with pytest.raises(LengthMismatch):
            RandomForest(ForestConfig(n_trees=2)).fit(rng.random((10, 3)),
                                                      np.repeat([1, 2], 4))


class TestSplits:
    def test_feature_tie_breaks_to_lowest_index(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        y = np.array([0, 0, 1, 1])
        cfg = ForestConfig(n_trees=1, max_features=2)
        tree = _grow_tree(X, y, 2, rng_from(0, 0), cfg)
        assert tree.feature[0] == 0

    def test_threshold_tie_breaks_to_lowest(self):
        # cuts at 0.5 and 2.5 score identically; 0.5 must win
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 1, 0, 1])
        cfg = ForestConfig(n_trees=1, max_features=1)
        tree = _grow_tree(X, y, 2, rng_from(0, 0), cfg)
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 0.5

    def test_thresholds_are_midpoints(self):
        X = np.array([[1.0], [2.0], [7.0], [8.0]])
        y = np.array([0, 0, 1, 1])
        tree = _grow_tree(X, y, 2, rng_from(0, 0),
                          ForestConfig(n_trees=1, max_features=1))
        assert tree.threshold[0] == 4.5

    def test_min_samples_leaf_stops_growth(self):
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([0, 0, 1])
        tree = _grow_tree(X, y, 2, rng_from(0, 0),
                          ForestConfig(n_trees=1, max_features=1,
                                       min_samples_leaf=2))
        assert len(tree.feature) == 1 and tree.feature[0] == -1

    def test_constant_features_make_a_leaf(self):
        X = np.ones((6, 2))
        y = np.repeat([0, 1], 3)
        tree = _grow_tree(X, y, 2, rng_from(0, 0),
                          ForestConfig(n_trees=1, max_features=2))
        assert tree.feature.tolist() == [-1]
        assert tree.probs[0].tolist() == [0.5, 0.5]


class TestPrediction:
    def test_single_pure_leaf_tree(self):
        rf = RandomForest.from_dict(model_doc([leaf_tree([0.0, 1.0])], [1, 3]))
        proba = rf.predict_proba(np.array([[0.7]]))
        assert proba.tolist() == [[0.0, 1.0]]
        assert rf.predict(np.array([[0.7]])).tolist() == [3]

    def test_tie_breaks_to_lowest_class_code(self):
        rf = RandomForest.from_dict(model_doc(
            [leaf_tree([1.0, 0.0]), leaf_tree([0.0, 1.0])], [3, 7]))
        assert rf.predict_proba(np.array([[0.0]])).tolist() == [[0.5, 0.5]]
        assert rf.predict(np.array([[0.0]])).tolist() == [3]

    def test_stump_changes_only_across_threshold(self):
        stump = {"feature": [0, -1, -1], "threshold": [0.5, None, None],
                 "left": [1, -1, -1], "right": [2, -1, -1],
                 "probs": [[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]]}
        rf = RandomForest.from_dict(model_doc([stump], [1, 2]))
        xs = np.linspace(0, 1, 21).reshape(-1, 1)
        pred = rf.predict(xs)
        assert np.array_equal(pred, np.where(xs[:, 0] <= 0.5, 1, 2))

    def test_probabilities_sum_to_one(self, rng):
        X, y = blobs(rng, [[0, 0], [2, 0], [0, 2]], 40)
        rf = RandomForest(ForestConfig(n_trees=15, seed=1)).fit(X, y)
        proba = rf.predict_proba(rng.random((50, 2)) * 3)
        assert (proba >= 0).all()
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_argmax_equals_tree_majority_vote(self, rng):
        X, y = blobs(rng, [[0, 0, 0], [1.5, 0, 0], [0, 1.5, 0]], 60)
        rf = RandomForest(ForestConfig(n_trees=25, seed=4)).fit(X, y)
        doc = rf.to_dict()
        Xq = rng.normal(0.5, 1.0, (300, 3))
        pred = rf.predict(Xq)
        for i, x in enumerate(Xq):
            votes = np.zeros(len(doc["classes"]))
            for t in doc["trees"]:
                votes[int(np.argmax(walk_tree(t, x)))] += 1
            top = np.flatnonzero(votes == votes.max())
            if len(top) == 1:
                assert pred[i] == doc["classes"][top[0]]

    def test_wrong_feature_count_rejected(self, rng):
        X, y = separable(rng, 30)
        rf = RandomForest(ForestConfig(n_trees=3, seed=0)).fit(X, y)
        with pytest.raises(LengthMismatch):
            rf.predict(rng.random((4, 7)))

    def test_predict_before_fit_rejected(self):
        with pytest.raises(ValueError):
            RandomForest().predict(np.zeros((1, 4)))


class TestDeterminism:
    def test_same_seed_same_model(self, rng):
        X, y = blobs(rng, [[0, 0], [2, 2]], 50)
        a = RandomForest(ForestConfig(n_trees=10, seed=7)).fit(X, y)
        b = RandomForest(ForestConfig(n_trees=10, seed=7)).fit(X, y)
        assert a.to_dict() == b.to_dict()

    def test_different_seed_different_bootstraps(self, rng):
        X, y = blobs(rng, [[0, 0], [2, 2]], 50)
        a = RandomForest(ForestConfig(n_trees=10, seed=7)).fit(X, y)
        b = RandomForest(ForestConfig(n_trees=10, seed=8)).fit(X, y)
        assert not np.array_equal(a._in_bag, b._in_bag)

    def test_index_sets_depend_on_count_not_content(self, rng):
        y = np.repeat([1, 2], 40)
        cfg = ForestConfig(n_trees=8, seed=5)
        a = RandomForest(cfg).fit(rng.random((80, 3)), y)
        b = RandomForest(cfg).fit(rng.random((80, 3)) * 100 - 50, y)
        assert np.array_equal(a._in_bag, b._in_bag)


class TestImbalanceModes:
    def test_balanced_bootstrap_draws_equal_class_counts(self, rng):
        y_idx = np.repeat([0, 1], [80, 20])
        rf = RandomForest(ForestConfig(bootstrap="balanced_bootstrap"))
        for t in range(20):
            idx = rf._bootstrap_indices(y_idx, 2, rng_from(0, t))
            drawn = y_idx[idx]
            assert (drawn == 0).sum() == 50
            assert (drawn == 1).sum() == 50

    def test_mode_none_draws_n_rows(self, rng):
        y_idx = np.repeat([0, 1], [80, 20])
        rf = RandomForest(ForestConfig(bootstrap="none"))
        idx = rf._bootstrap_indices(y_idx, 2, rng_from(0, 0))
        assert len(idx) == 100

    def test_all_modes_train_and_predict_separably(self, rng):
        X, y = separable(rng)
        for mode in ("none", "balanced_bootstrap", "jitter_oversample"):
            rf = RandomForest(ForestConfig(n_trees=20, bootstrap=mode,
                                           seed=2)).fit(X, y)
            assert (rf.predict(X) == y).mean() >= 0.99
            assert rf.oob_error() <= 0.02


class TestJitterOversample:
    def test_class_at_target_unchanged(self, rng):
        X = rng.random((250, 3))
        y = np.repeat([1, 2], 125)
        X2, y2 = jitter_oversample(X, y, min_per_class=125, seed=0)
        assert X2.shape == X.shape and np.array_equal(y2, y)

    def test_small_class_topped_up_to_125(self, rng):
        X = rng.random((210, 3))
        y = np.repeat([1, 2], [10, 200])
        X2, y2 = jitter_oversample(X, y, min_per_class=125, seed=0)
        assert (y2 == 1).sum() == 125
        assert (y2 == 2).sum() == 200
        # originals preserved verbatim, synthetic rows appended
        assert np.array_equal(X2[:210], X)
        assert np.array_equal(y2[:210], y)

    def test_synthetic_rows_match_class_statistics(self, rng):
        mu, sd = np.array([3.0, -2.0, 0.5]), np.array([1.0, 0.5, 2.0])
        X = rng.normal(mu, sd, (10, 3))
        y = np.concatenate([np.ones(10, dtype=int), np.full(300, 2)])
        Xall = np.vstack([X, rng.random((300, 3))])
        X2, y2 = jitter_oversample(Xall, y, min_per_class=125, seed=42)
        synth = X2[310:]
        assert len(synth) == 115
        class_mu, class_sd = X.mean(axis=0), X.std(axis=0)
        assert (np.abs(synth.mean(axis=0) - class_mu)
                <= 3 * class_sd / np.sqrt(len(synth))).all()

    def test_deterministic_per_seed(self, rng):
        X = rng.random((60, 2))
        y = np.repeat([1, 2], [10, 50])
        a = jitter_oversample(X, y, min_per_class=30, seed=9)
        b = jitter_oversample(X, y, min_per_class=30, seed=9)
        c = jitter_oversample(X, y, min_per_class=30, seed=10)
        assert np.array_equal(a[0], b[0])
        assert not np.array_equal(a[0], c[0])

    def test_class_below_two_samples_rejected(self, rng):
        X = rng.random((31, 2))
        y = np.concatenate([[1], np.full(30, 2)])
        with pytest.raises(ClassTooSmall):
            jitter_oversample(X, y, min_per_class=10, seed=0)


class TestOob:
    def test_one_tree_oob_is_exact_complement(self, rng):
        X, y = separable(rng, 50)
        rf = RandomForest(ForestConfig(n_trees=1, bootstrap="none",
                                       seed=3)).fit(X, y)
        rf.oob_error()
        assert rf.oob_uncovered_ == int(rf._in_bag[0].sum())

    def test_oob_matches_brute_force_recomputation(self, rng):
        X, y = blobs(rng, [[0, 0], [1.5, 0], [0, 1.5]], 30)
        rf = RandomForest(ForestConfig(n_trees=7, bootstrap="none",
                                       seed=11)).fit(X, y)
        got = rf.oob_error()
        doc = rf.to_dict()
        n = len(y)
        votes = np.zeros((n, 3))
        covered = np.zeros(n, dtype=bool)
        for t in range(7):
            out = ~rf._in_bag[t]
            covered |= out
            for i in np.flatnonzero(out):
                votes[i] += walk_tree(doc["trees"][t], X[i])
        idx_of = {c: k for k, c in enumerate(doc["classes"])}
        y_idx = np.array([idx_of[v] for v in y])
        pred = np.argmax(votes[covered], axis=1)
        want = float(1.0 - (pred == y_idx[covered]).mean())
        assert got == pytest.approx(want, abs=1e-12)
        assert rf.oob_uncovered_ == int(n - covered.sum())

    def test_oob_unbiased_against_holdout(self):
        # mean signed OOB-vs-holdout gap over seeds stays within 3 pp
        means = [[0, 0, 0, 0], [2.2, 0, 0, 0], [0, 2.2, 0, 0], [1.5, 1.5, 0, 0]]
        gaps = []
        for seed in range(5):
            r = np.random.default_rng(seed + 300)
            Xtr = np.vstack([r.normal(m, 1.0, (70, 4)) for m in means])
            Xte = np.vstack([r.normal(m, 1.0, (70, 4)) for m in means])
            yy = np.repeat([1, 2, 3, 4], 70)
            rf = RandomForest(ForestConfig(n_trees=50, seed=seed)).fit(Xtr, yy)
            held = 1.0 - (rf.predict(Xte) == yy).mean()
            gaps.append(rf.oob_error() - held)
        assert abs(float(np.mean(gaps))) <= 0.03


class TestPersistence:
    def test_json_round_trip_preserves_predictions(self, rng):
        X, y = blobs(rng, [[0, 0], [2, 1], [1, 2]], 30)
        rf = RandomForest(ForestConfig(n_trees=8, seed=6)).fit(X, y)
        doc = json.loads(json.dumps(rf.to_dict()))
        back = RandomForest.from_dict(doc)
        Xq = rng.random((40, 2)) * 2
        assert np.array_equal(rf.predict(Xq), back.predict(Xq))
        np.testing.assert_array_equal(rf.predict_proba(Xq), back.predict_proba(Xq))
        assert back.n_features_ == 2

    def test_version_checked(self, rng):
        X, y = separable(rng, 20)
        doc = RandomForest(ForestConfig(n_trees=2, seed=0)).fit(X, y).to_dict()
        assert doc["version"] == MODEL_VERSION
        doc["version"] = 99
        with pytest.raises(ValueError, match="version"):
            RandomForest.from_dict(doc)

    def test_leaf_thresholds_serialize_as_null(self, rng):
        X, y = separable(rng, 20)
        doc = RandomForest(ForestConfig(n_trees=2, seed=0)).fit(X, y).to_dict()
        t = doc["trees"][0]
        for f, thr in zip(t["feature"], t["threshold"]):
            assert (thr is None) == (f == -1)

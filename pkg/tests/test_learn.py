import numpy as np
import pytest

from deltarad import kernels
from deltarad.learn import (
    AdaBoost,
    ConfusionMatrix,
    Dataset,
    DecisionTree,
    GradientBoostedTrees,
    RandomForest,
    SVM,
    evaluate,
    feature_importances,
    kfold_stratified,
    load_model,
    predict,
    random_search,
    report_from_confusion,
    save_model,
    stratified_split,
    train,
)
from deltarad.learn.models import class_weights
from deltarad.learn.search import sample_configs


def cols(p):
    return [f"f{i}" for i in range(p)]


def blobs(rng, n=200, p=5, sep=3.0):
    y = np.arange(n) % 2
    X = rng.normal(size=(n, p)) + sep * y[:, None]
    return X, y


def dataset(y, p=3, rng=None, groups=None):
    rng = rng or np.random.default_rng(0)
    y = np.asarray(y)
    return Dataset(rng.normal(size=(len(y), p)), y, cols(p), groups)


XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


class TestDataset:
    def test_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[np.nan]]), [0], ["a"])
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 1)), [0, 2], ["a"])
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 2)), [0, 1], ["a", "a"])
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 1)), [0, 1], ["a"], ["p1"])


class TestSplit:
    def test_177_cases(self):
        y = np.array([1] * 150 + [0] * 27)
        s = stratified_split(dataset(y), 0.2, seed=4)
        assert len(s.test) == 36 and len(s.train) == 141
        for c in (0, 1):
            expected = 36 * np.sum(y == c) / 177
            assert abs(np.sum(y[s.test] == c) - expected) <= 1

    def test_ten_cases(self):
        y = np.array([0] * 5 + [1] * 5)
        s = stratified_split(dataset(y), 0.2, 0)
        assert sorted(y[s.test].tolist()) == [0, 1]

    def test_deterministic(self):
        y = np.arange(60) % 2
        d = dataset(y)
        a, b, c = stratified_split(d, 0.25, 1), stratified_split(d, 0.25, 1), stratified_split(d, 0.25, 2)
        assert np.array_equal(a.test, b.test)
        assert not np.array_equal(a.test, c.test)
        assert np.bincount(y[a.test]).tolist() == np.bincount(y[c.test]).tolist()

    def test_partition(self):
        d = dataset(np.arange(37) % 2)
        s = stratified_split(d, 0.3, 0)
        assert np.array_equal(np.sort(np.concatenate([s.train, s.test])), np.arange(37))

    def test_errors(self):
        with pytest.raises(ValueError):
            stratified_split(dataset([0, 1, 1, 1]), 0.2)
        with pytest.raises(ValueError):
            stratified_split(dataset([0, 0, 1, 1]), 1.0)

    def test_grouped(self, rng):
        groups = [f"P{i // 3}" for i in range(90)]
        y = np.array([(i // 3) % 2 for i in range(90)])
        d = dataset(y, groups=groups)
        s = stratified_split(d, 0.2, 0, grouped=True)
        assert not ({groups[i] for i in s.test} & {groups[i] for i in s.train})
        assert abs(len(s.test) - 18) <= 3


class TestKFold:
    def test_balanced(self):
        folds = kfold_stratified(dataset(np.arange(100) % 2), 5, 0)
        y = np.arange(100) % 2
        for f in folds:
            assert len(f.test) == 20 and np.sum(y[f.test]) == 10

    def test_partition_random(self, rng):
        for _ in range(20):
            n = int(rng.integers(10, 80))
            y = (rng.random(n) < 0.4).astype(int)
            y[:5], y[5:10] = 0, 1
            folds = kfold_stratified(dataset(y), 5, int(rng.integers(100)))
            allt = np.concatenate([f.test for f in folds])
            assert np.array_equal(np.sort(allt), np.arange(n))
            for f in folds:
                assert len(np.intersect1d(f.train, f.test)) == 0
                for c in (0, 1):
                    assert abs(np.sum(y[f.test] == c) - np.sum(y == c) / 5) < 1

    def test_177_sizes(self):
        y = np.array([1] * 150 + [0] * 27)
        assert {len(f.test) for f in kfold_stratified(dataset(y), 5, 0)} == {35, 36}

    def test_small_class(self):
        with pytest.raises(ValueError):
            kfold_stratified(dataset([0, 0, 0, 0, 0, 1, 1]), 5)


def exhaustive_tree_accuracy(X, y, depth):
    """Best training accuracy of any depth-limited axis-aligned tree (tiny inputs only)."""
    def best(rows, d):
        labels = y[rows]
        top = max(np.sum(labels == 0), np.sum(labels == 1))
        if d == 0 or len(rows) < 2:
            return top
        for f in range(X.shape[1]):
            vals = np.unique(X[rows, f])
            for a, b in zip(vals[:-1], vals[1:]):
                t = (a + b) / 2
                left, right = rows[X[rows, f] <= t], rows[X[rows, f] > t]
                top = max(top, best(left, d - 1) + best(right, d - 1))
        return top
    return best(np.arange(len(y)), depth) / len(y)


class TestDecisionTree:
    def test_separable_1d(self):
        X = np.array([[-2.0], [-1.0], [-0.5], [0.0], [0.5], [3.0]])
        y = (X[:, 0] >= 0).astype(int)
        m = DecisionTree().fit(X, y)
        assert m.tree_.n_nodes == 3
        assert np.array_equal(m.predict(X), y)

    def test_depth_zero_majority(self):
        X = np.arange(5.0).reshape(-1, 1)
        m = DecisionTree(max_depth=0, class_weight=None).fit(X, [1, 1, 1, 0, 0])
        assert m.predict(X).tolist() == [1] * 5

    def test_xor(self):
        for depth, expect in ((1, 0.5), (2, 1.0)):
            assert exhaustive_tree_accuracy(XOR_X, XOR_Y, depth) == expect
            acc = np.mean(DecisionTree(max_depth=depth).fit(XOR_X, XOR_Y).predict(XOR_X) == XOR_Y)
            assert acc == expect

    def test_tie_break_lowest_column(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        m = DecisionTree().fit(X, [0, 1])
        assert m.tree_.feature[0] == 0 and m.tree_.threshold[0] == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            DecisionTree().fit(np.zeros((0, 2)), np.zeros(0))

    def test_memorizes(self, rng):
        X, y = rng.normal(size=(60, 4)), rng.integers(0, 2, 60)
        m = train("DT", X, y, cols(4))
        assert np.array_equal(predict(m, X, cols(4)), y)


class TestRandomForest:
    def test_reduces_to_tree(self, rng):
        X, y = blobs(rng, 80, 4, 1.0)
        rf = RandomForest(1, max_depth=4, bootstrap=False, max_features=None, seed=3).fit(X, y)
        dt = DecisionTree(max_depth=4).fit(X, y)
        Z = rng.normal(size=(300, 4)) * 2
        assert np.array_equal(rf.predict(Z), dt.predict(Z))

    def test_blobs(self, rng):
        X, y = blobs(rng, 300, 5)
        rf = RandomForest(100, seed=1).fit(X[:200], y[:200])
        assert np.mean(rf.predict(X[200:]) == y[200:]) >= 0.95

    def test_deterministic(self, rng):
        X, y = blobs(rng, 100, 5, 0.8)
        a = RandomForest(20, seed=9).fit(X, y).predict(X)
        b = RandomForest(20, seed=9).fit(X, y).predict(X)
        assert np.array_equal(a, b)


class TestAdaBoost:
    def test_separable_one_round(self):
        X = np.array([[-1.0], [-0.5], [0.5], [1.0]])
        m = AdaBoost(10).fit(X, [0, 0, 1, 1])
        assert len(m.trees_) == 1 and m.errors_[0] == 0.0
        assert m.predict(X).tolist() == [0, 0, 1, 1]

    def test_round_errors_and_ensemble_beats_base(self, rng):
        for _ in range(20):
            X, y = blobs(rng, 80, 3, 1.0)
            m = AdaBoost(30).fit(X, y)
            assert all(e < 0.5 for e in m.errors_)
            ens = np.mean(m.predict(X) == y)
            base = max(np.mean((t.predict_value(X) > 0.5) == y) for t in m.trees_)
            assert ens >= base


class TestGbt:
    def test_lambda_limit(self, rng):
        X, y = blobs(rng, 60, 3, 1.0)
        y[:40] = 1
        m = GradientBoostedTrees(20, reg_lambda=1e15, class_weight=None).fit(X, y)
        assert np.allclose(m.decision_function(X), m.base_, atol=1e-9)
        assert np.all(m.predict(X) == 1)

    def test_loss_non_increasing(self, rng):
        for _ in range(20):
            X, y = blobs(rng, 80, 3, 0.7)
            lr = float(rng.choice([0.05, 0.1, 0.3]))
            tr = GradientBoostedTrees(30, learning_rate=lr).fit(X, y).loss_trace_
            assert all(b <= a + 1e-12 for a, b in zip(tr, tr[1:]))

    def test_blobs(self, rng):
        X, y = blobs(rng, 300, 5)
        m = GradientBoostedTrees(50).fit(X[:200], y[:200])
        assert np.mean(m.predict(X[200:]) == y[200:]) >= 0.95


class TestSvm:
    def test_linear_separable(self, rng):
        X = np.vstack([rng.normal(-3, 0.5, (20, 2)), rng.normal(3, 0.5, (20, 2))])
        y = np.repeat([0, 1], 20)
        m = SVM(C=1000.0, kernel="linear").fit(X, y)
        assert np.all(m.predict(X) == y)
        margin = np.abs(m.decision_function(X)) <= 1 + 1e-3
        assert np.all(m.alpha_[margin] > 0)

    def test_dual_monotone_and_constraints(self, rng):
        for kernel in ("linear", "rbf"):
            X, y = blobs(rng, 120, 4, 1.0)
            m = SVM(C=1.0, kernel=kernel).fit(X, y)
            tr = m.dual_trace_
            assert all(b >= a - 1e-12 for a, b in zip(tr, tr[1:]))
            assert np.all(m.alpha_ >= 0) and np.all(m.alpha_ <= m.box_ + 1e-12)
            assert abs(np.dot(m.alpha_, m.labels_pm_)) <= 1e-6

    def test_identical_labels(self):
        with pytest.raises(ValueError):
            SVM().fit(np.zeros((4, 2)), [1, 1, 1, 1])

    def test_rbf_importance_undefined(self, rng):
        X, y = blobs(rng, 40, 2)
        with pytest.raises(ValueError):
            feature_importances(train("SVM", X, y, cols(2), {"kernel": "rbf"}))
        lin = feature_importances(train("SVM", X, y, cols(2), {"kernel": "linear"}))
        assert sum(w for _, w in lin) == pytest.approx(1.0, abs=1e-9)


class TestSearch:
    def test_single_draw(self, rng):
        X, y = blobs(rng, 60, 3)
        d = Dataset(X, y, cols(3))
        r = random_search("DT", d, {"max_depth": [1, 2, 3]}, n_iter=1, seed=5)
        assert len(r.table) == 1 and r.best_params == r.table[0].params
        assert r.best_params == sample_configs({"max_depth": [1, 2, 3]}, 1, 5)[0]

    def test_planted_optimum(self, rng):
        X, y = blobs(rng, 80, 3)
        r = random_search("DT", Dataset(X, y, cols(3)), {"max_depth": [0, 3]}, n_iter=10, seed=0)
        assert r.best_params == {"max_depth": 3}

    def test_deterministic(self, rng):
        X, y = blobs(rng, 80, 3, 1.0)
        d = Dataset(X, y, cols(3))
        a = random_search("ADA", d, {"n_estimators": [5, 10, 20], "learning_rate": [0.5, 1.0]}, 3, seed=2)
        b = random_search("ADA", d, {"n_estimators": [5, 10, 20], "learning_rate": [0.5, 1.0]}, 3, seed=2)
        assert a == b

    def test_space_mismatch(self, rng):
        X, y = blobs(rng, 40, 2)
        with pytest.raises(ValueError):
            random_search("DT", Dataset(X, y, cols(2)), {"n_estimators": [10]})

    def test_distinct_draws(self):
        cfgs = sample_configs({"a": [1, 2], "b": [3, 4, 5]}, 10, 0)
        assert len(cfgs) == 6 and len({tuple(sorted(c.items())) for c in cfgs}) == 6


class TestPredict:
    def test_column_permutation_rejected(self, rng):
        X, y = blobs(rng, 40, 3)
        m = train("DT", X, y, cols(3))
        with pytest.raises(ValueError, match="order"):
            predict(m, X[:, [1, 0, 2]], ["f1", "f0", "f2"])
        with pytest.raises(ValueError, match="missing"):
            predict(m, X[:, :2], cols(2))

    def test_repeatable(self, rng):
        X, y = blobs(rng, 40, 3, 0.5)
        m = train("RF", X, y, cols(3), {"n_estimators": 10}, seed=1)
        assert np.array_equal(predict(m, X, cols(3)), predict(m, X, cols(3)))

    def test_serialization(self, rng, tmp_path):
        X, y = blobs(rng, 50, 3, 0.5)
        for fam in ("DT", "RF", "ADA", "GBT", "SVM"):
            m = train(fam, X, y, cols(3), seed=2)
            save_model(m, tmp_path / f"{fam}.model")
            back = load_model(tmp_path / f"{fam}.model")
            assert back.family == fam and back.columns == m.columns and back.seed == 2
            assert np.array_equal(predict(back, X, cols(3)), predict(m, X, cols(3)))
        (tmp_path / "bad").write_bytes(b"junk")
        with pytest.raises(ValueError):
            load_model(tmp_path / "bad")


class TestEvaluate:
    def test_perfect(self):
        r = evaluate([0, 1, 1, 0], [0, 1, 1, 0])
        assert r.accuracy == 1.0 and r.macro == (1.0, 1.0, 1.0)

    def test_table2_counts(self):
        r = report_from_confusion(ConfusionMatrix(tn=20, fp=2, fn=1, tp=13))
        assert r.accuracy == 33 / 36
        p, rc = r.per_class[1].precision, r.per_class[1].recall
        assert p == 13 / 15 and rc == 13 / 14
        assert r.per_class[1].f1 == 2 * p * rc / (p + rc)
        assert r.confusion.predicted_by_actual() == [[20, 1], [2, 13]]

    def test_degenerate(self):
        r = evaluate([1] * 10, [0] * 5 + [1] * 5)
        assert r.accuracy == 0.5
        assert r.per_class[0].recall == 0.0
        assert "precision_0" in r.zero_division

    def test_errors(self):
        with pytest.raises(ValueError):
            evaluate([0, 1], [0])
        with pytest.raises(ValueError):
            evaluate([], [])

    def test_counts_match_pairs(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 40))
            pred, true = rng.integers(0, 2, n), rng.integers(0, 2, n)
            c = evaluate(pred, true).confusion
            pairs = list(zip(pred.tolist(), true.tolist()))
            assert (c.tn, c.fp, c.fn, c.tp) == tuple(pairs.count(k) for k in [(0, 0), (1, 0), (0, 1), (1, 1)])


def planted(rng, n=300, p=8):
    X = rng.normal(size=(n, p))
    y = (X[:, 0] + 0.3 * rng.normal(size=n) > 0).astype(int)
    return X, y


class TestImportance:
    def test_single_split(self):
        X = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        m = train("DT", X, [0, 0, 1, 1], ["a", "b"])
        assert feature_importances(m)[0] == ("a", 1.0)

    @pytest.mark.parametrize("fam,params", [("RF", {"n_estimators": 100}), ("ADA", {"n_estimators": 50})])
    def test_planted_signal(self, rng, fam, params):
        X, y = planted(rng)
        ranked = feature_importances(train(fam, X, y, cols(8), params, seed=1))
        assert ranked[0][0] == "f0"

    def test_sum_to_one(self, rng):
        X, y = planted(rng)
        for fam in ("DT", "RF", "ADA", "GBT"):
            m = train(fam, X, y, cols(8), seed=0)
            assert sum(w for _, w in feature_importances(m, top_k=8)) == pytest.approx(1.0, abs=1e-9)
            assert all(w >= 0 for _, w in feature_importances(m))

    def test_top_k(self, rng):
        X, y = planted(rng, p=12)
        assert len(feature_importances(train("RF", X, y, cols(12), {"n_estimators": 10}), top_k=8)) == 8


def test_class_weights_balanced():
    w = class_weights(np.array([0, 0, 0, 1]), "balanced")
    assert w.tolist() == [4 / 6, 4 / 6, 4 / 6, 2.0]
    assert w[:3].sum() == pytest.approx(w[3:].sum())


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels unavailable")
def test_split_kernel_parity(rng):
    from deltarad import _pykernels as py

    for _ in range(30):
        n, p = int(rng.integers(4, 60)), int(rng.integers(1, 6))
        X = np.round(rng.normal(size=(n, p)), 1)
        y = rng.integers(0, 2, n).astype(float)
        w = rng.uniform(0.5, 2.0, n)
        rows = np.sort(rng.choice(n, int(rng.integers(2, n + 1)), replace=False)).astype(np.int64)
        feats = np.arange(p, dtype=np.int64)
        a = kernels.best_split_gini(X, y, w, rows, feats, 1)
        b = py.best_split_gini(X, y, w, rows, feats, 1)
        assert a[0] == b[0] and (a[0] < 0 or (a[1] == b[1] and a[2] == pytest.approx(b[2], rel=1e-12)))
        g, h = rng.normal(size=n), rng.uniform(0.1, 0.3, n)
        a = kernels.best_split_newton(X, g, h, rows, feats, 1.0, 0.2, 1)
        b = py.best_split_newton(X, g, h, rows, feats, 1.0, 0.2, 1)
        assert a[0] == b[0] and (a[0] < 0 or (a[1] == b[1] and a[2] == pytest.approx(b[2], rel=1e-12)))


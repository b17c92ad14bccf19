import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from cotriage.data_model import ServiceCatalog
from cotriage.model import (
    LinearSvmModel,
    ModelFormatError,
    SingleClassError,
    SvmConfig,
    TrainingSet,
    TreeConfig,
    dumps_model,
    evaluate,
    load_model,
    loads_model,
    predict,
    save_model,
    score_predictions,
    train_svm,
    train_tree,
)

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = ["A", "B", "B", "A"]


def accuracy(model, X, labels):
    return np.mean([predict(model, x).service == y for x, y in zip(X, labels)])


def gini(labels):
    n = len(labels)
    if n == 0:
        return 0.0
    return 1.0 - sum((labels.count(c) / n) ** 2 for c in set(labels))


def blobs(seed=0, n=40):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, size=(n, 2))
    b = rng.uniform(0, 1, size=(n, 2)) + [3.0, 0.0]
    return np.vstack([a, b]), ["A"] * n + ["B"] * n


class TestTree:
    def test_pure_root(self):
        m = train_tree(TrainingSet(np.arange(6.0).reshape(3, 2), ["X"] * 3))
        assert m.n_nodes == 1
        p = predict(m, np.array([9.0, -4.0]))
        assert p.service == "X" and p.score == 1.0

    def test_one_split_matches_brute_force(self):
        X = np.array([[0.0], [0.0], [1.0], [1.0], [1.0]])
        y = ["A", "A", "B", "B", "B"]
        m = train_tree(TrainingSet(X, y))
        # enumerate every midpoint threshold and its weighted Gini
        values = sorted(set(X[:, 0]))
        best = min(
            ((values[i] + values[i + 1]) / 2 for i in range(len(values) - 1)),
            key=lambda t: sum(
                len(part) / len(y) * gini(part)
                for part in ([c for x, c in zip(X[:, 0], y) if x <= t], [c for x, c in zip(X[:, 0], y) if x > t])
            ),
        )
        assert m.feature[0] == 0 and m.threshold[0] == best == 0.5
        assert m.n_nodes == 3
        assert accuracy(m, X, y) == 1.0

    @pytest.mark.parametrize("depth", [2, 3, 20])
    def test_xor_needs_depth_two(self, depth):
        m = train_tree(TrainingSet(XOR_X, XOR_Y), TreeConfig(max_depth=depth))
        assert accuracy(m, XOR_X, XOR_Y) == 1.0

    def test_xor_depth_one_is_not_enough(self):
        m = train_tree(TrainingSet(XOR_X, XOR_Y), TreeConfig(max_depth=1))
        assert accuracy(m, XOR_X, XOR_Y) < 1.0

    def test_tie_goes_to_lowest_column(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        m = train_tree(TrainingSet(X, ["A", "B"]))
        assert m.feature[0] == 0

    def test_min_samples_leaf(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        m = train_tree(TrainingSet(X, ["A", "B", "B", "B"]), TreeConfig(min_samples_leaf=2))
        leaves = m.value[m.feature < 0]
        assert leaves.sum(axis=1).min() >= 2

    def test_empty(self):
        with pytest.raises(ValueError):
            train_tree(TrainingSet(np.zeros((0, 3)), []))

    def test_accuracy_monotone_in_depth(self):
        rng = np.random.default_rng(1)
        X = rng.integers(0, 4, size=(120, 5)).astype(float)
        y = [f"s{int(v)}" for v in (X[:, 0] + X[:, 1] * X[:, 2]) % 4]
        accs = [accuracy(train_tree(TrainingSet(X, y), TreeConfig(max_depth=d)), X, y) for d in range(8)]
        assert all(a <= b for a, b in zip(accs, accs[1:]))

    def test_row_order_irrelevant(self):
        rng = np.random.default_rng(2)
        X = rng.integers(0, 3, size=(50, 4)).astype(float)
        y = [f"c{int(v)}" for v in rng.integers(0, 3, 50)]
        perm = rng.permutation(50)
        a = train_tree(TrainingSet(X, y))
        b = train_tree(TrainingSet(X[perm], [y[i] for i in perm]))
        assert dumps_model(a) == dumps_model(b)


def linearly_separable(X, labels_pm):
    """LP feasibility of y_i (w.x_i + b) >= 1."""
    n, d = X.shape
    A = -labels_pm[:, None] * np.hstack([X, np.ones((n, 1))])
    res = linprog(np.zeros(d + 1), A_ub=A, b_ub=-np.ones(n), bounds=[(None, None)] * (d + 1))
    return res.status == 0


class TestSvm:
    def test_separable_blobs(self):
        X, y = blobs()
        # exhaustive margin check with the separator x0 = 2
        w, b = np.array([1.0, 0.0]), -2.0
        sign = np.array([1.0 if c == "B" else -1.0 for c in y])
        assert np.all(sign * (X @ w + b) >= 1.0)
        m = train_svm(TrainingSet(X, y))
        assert accuracy(m, X, y) == 1.0
        assert predict(m, X[0]).service == "A" and predict(m, X[-1]).service == "B"

    def test_xor_bound(self):
        # Enumerate all 16 labelings: exactly the two XOR ones are not separable,
        # so no linear rule gets more than 3 of the 4 points right.
        inseparable = [
            lab for lab in itertools.product([-1.0, 1.0], repeat=4)
            if not linearly_separable(XOR_X, np.array(lab))
        ]
        assert sorted(inseparable) == [(-1.0, 1.0, 1.0, -1.0), (1.0, -1.0, -1.0, 1.0)]
        m = train_svm(TrainingSet(XOR_X, XOR_Y))
        assert accuracy(m, XOR_X, XOR_Y) <= 0.75

    def test_duplicate_rows_same_decisions(self):
        X, y = blobs(seed=3, n=25)
        rng = np.random.default_rng(0)
        probe = rng.uniform(-1, 5, size=(200, 2))
        m1 = train_svm(TrainingSet(X, y))
        m2 = train_svm(TrainingSet(np.vstack([X, X]), y + y))
        assert [predict(m1, p).service for p in probe] == [predict(m2, p).service for p in probe]
        np.testing.assert_allclose(m1.weights, m2.weights, rtol=1e-9, atol=1e-12)

    def test_single_label(self):
        with pytest.raises(SingleClassError):
            train_svm(TrainingSet(np.ones((3, 2)), ["A"] * 3))

    def test_reproducible_and_order_free(self):
        X, y = blobs(seed=5, n=15)
        perm = np.random.default_rng(1).permutation(len(y))
        a = train_svm(TrainingSet(X, y), SvmConfig(seed=4))
        b = train_svm(TrainingSet(X[perm], [y[i] for i in perm]), SvmConfig(seed=4))
        assert dumps_model(a) == dumps_model(b)

    def test_multiclass_one_vs_rest(self):
        X = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]] * 5)
        y = ["a", "b", "c"] * 5
        m = train_svm(TrainingSet(X, y))
        assert m.weights.shape == (3, 3)
        assert accuracy(m, X, y) == 1.0


class TestPredict:
    def test_tie_break_alphabetical(self):
        m = LinearSvmModel(["zeta", "alpha"], np.zeros((2, 2)), np.zeros(2), 0.01, 1, 0.1)
        p = predict(m, np.array([1.0, 2.0]))
        assert p.service == "alpha"
        assert [s for s, _ in p.ranking] == ["alpha", "zeta"]

    def test_ranking_descending(self):
        m = LinearSvmModel(["a", "b", "c"], np.eye(3), np.zeros(3), 0.01, 1, 0.1)
        p = predict(m, np.array([0.1, 3.0, 2.0]))
        assert [s for s, _ in p.ranking] == ["b", "c", "a"]
        assert all(np.isfinite(s) for _, s in p.ranking)

    def test_dimension_mismatch(self):
        m = train_tree(TrainingSet(np.zeros((2, 3)), ["a", "a"]))
        with pytest.raises(ValueError):
            predict(m, np.zeros(4))


class TestEvaluate:
    cat = ServiceCatalog([("net-1", "Networking"), ("net-2", "Networking"), ("vm-1", "Compute"), ("st-1", "Storage")])

    def test_all_correct(self):
        X = np.array([[0.0], [1.0], [2.0]])
        y = ["net-1", "vm-1", "st-1"]
        m = train_tree(TrainingSet(X, y))
        rep = evaluate(m, TrainingSet(X, y), self.cat)
        assert rep.accuracy == 1.0
        assert all(rep.category_accuracy(c) == 1.0 for c in ("Networking", "Compute", "Storage"))

    def test_three_of_four(self):
        truths = ["net-1", "net-2", "vm-1", "st-1"]
        preds = ["net-1", "vm-1", "vm-1", "st-1"]
        rep = score_predictions(truths, preds, self.cat)
        assert rep.accuracy == 0.75
        assert rep.category_accuracy("Networking") == 0.5
        assert rep.confusion == {("net-2", "vm-1"): 1}

    def test_absent_category(self):
        rep = score_predictions(["vm-1"], ["vm-1"], self.cat)
        assert rep.category_accuracy("Application") is None
        assert "Application" not in rep.per_category
        assert all(r.get("category") != "Application" for r in rep.records())

    def test_overall_is_weighted_mean(self):
        truths = ["net-1", "net-2", "vm-1", "st-1", "vm-1"]
        preds = ["net-1", "st-1", "net-1", "st-1", "vm-1"]
        rep = score_predictions(truths, preds, self.cat)
        weighted = sum(c for c, t in rep.per_category.values()) / sum(t for c, t in rep.per_category.values())
        assert rep.accuracy == weighted == 3 / 5

    def test_empty(self):
        with pytest.raises(ValueError):
            score_predictions([], [], self.cat)


class TestPersistence:
    def test_tree_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.integers(0, 5, size=(80, 6)).astype(float)
        y = [f"s{int(v)}" for v in rng.integers(0, 4, 80)]
        m = train_tree(TrainingSet(X, y))
        save_model(m, tmp_path / "m")
        back = load_model(tmp_path / "m")
        probes = rng.uniform(-1, 6, size=(100, 6))
        assert [predict(m, p).ranking for p in probes] == [predict(back, p).ranking for p in probes]

    def test_svm_round_trip(self, tmp_path):
        X, y = blobs(seed=8)
        m = train_svm(TrainingSet(X, y))
        save_model(m, tmp_path / "m")
        back = load_model(tmp_path / "m")
        assert np.array_equal(back.weights, m.weights) and np.array_equal(back.bias, m.bias)

    def test_truncated(self, tmp_path):
        X, y = blobs(seed=8)
        text = dumps_model(train_svm(TrainingSet(X, y)))
        for cut in (len(text) // 2, len(text) - 10, 20):
            with pytest.raises(ModelFormatError):
                loads_model(text[:cut])

    def test_version_mismatch(self):
        text = dumps_model(train_tree(TrainingSet(XOR_X, XOR_Y)))
        with pytest.raises(ModelFormatError, match="version"):
            loads_model(text.replace("version 1", "version 9"))

    def test_bytes_deterministic(self):
        X, y = blobs(seed=2)
        assert dumps_model(train_svm(TrainingSet(X, y))) == dumps_model(train_svm(TrainingSet(X, y)))
        assert dumps_model(train_tree(TrainingSet(X, y))) == dumps_model(train_tree(TrainingSet(X, y)))

import numpy as np
import pytest
from sklearn.base import clone

from terpene_trace.exceptions import SingleClass
from terpene_trace.forest import TreeEnsembleClassifier, resolve_max_features


def _clusters(seed, n=250, d=5, sep=10.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, d)) + sep / np.sqrt(d) * y[:, None]
    return X, np.where(y == 1, "Citral", "Control")


def test_max_features_resolution():
    assert resolve_max_features("sqrt", 40) == 7
    assert resolve_max_features("sqrt", 16) == 4
    assert resolve_max_features(None, 9) == 9
    assert resolve_max_features(0.5, 9) == 5


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        TreeEnsembleClassifier().fit(np.ones((5, 2)), ["a"] * 5)


def test_perfect_splitter_fits_training_set():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 3, 90)
    X = np.column_stack([y, rng.normal(size=(90, 4))])
    clf = TreeEnsembleClassifier(n_trees=20, random_state=1).fit(X, y.astype(str))
    assert (clf.predict(X) == y.astype(str)).all()


@pytest.mark.parametrize("seed", range(3))
def test_separated_clusters(seed):
    X, y = _clusters(seed)
    clf = TreeEnsembleClassifier(n_trees=50, random_state=seed).fit(X[:200], y[:200])
    assert (clf.predict(X[200:]) == y[200:]).mean() == 1.0


def test_classes_in_canonical_order():
    X, y = _clusters(0)
    clf = TreeEnsembleClassifier(n_trees=5).fit(X, y)
    assert list(clf.classes_) == ["Control", "Citral"]


def test_probabilities_are_vote_fractions():
    X, y = _clusters(1)
    clf = TreeEnsembleClassifier(n_trees=7, random_state=2).fit(X, y)
    p = clf.predict_proba(X)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(p * 7, np.round(p * 7), atol=1e-9)
    assert (clf.classes_[p.argmax(axis=1)] == clf.predict(X)).all()


def test_single_tree_is_one_hot():
    X, y = _clusters(2)
    p = TreeEnsembleClassifier(n_trees=1).fit(X, y).predict_proba(X)
    assert set(np.unique(p)) <= {0.0, 1.0}


def test_ties_go_to_first_canonical_class():
    X = np.array([[0.0], [0.0], [0.0], [0.0]])
    clf = TreeEnsembleClassifier(n_trees=2, bootstrap=False).fit(X, ["Citral", "Control", "Citral", "Control"])
    assert clf.predict([[0.0]])[0] == "Control"


def test_row_order_does_not_matter():
    X, y = _clusters(3, sep=2.0)
    perm = np.random.default_rng(9).permutation(len(y))
    a = TreeEnsembleClassifier(n_trees=30, random_state=4).fit(X, y)
    b = TreeEnsembleClassifier(n_trees=30, random_state=4).fit(X[perm], y[perm])
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))


def test_thread_count_does_not_matter():
    X, y = _clusters(4, sep=2.0)
    a = TreeEnsembleClassifier(n_trees=20, random_state=5, n_jobs=1).fit(X, y)
    b = TreeEnsembleClassifier(n_trees=20, random_state=5, n_jobs=3).fit(X, y)
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))
    np.testing.assert_array_equal(a.feature_importances_, b.feature_importances_)


def test_column_scaling_invariance():
    X, y = _clusters(5, sep=2.0)
    scaled = X.copy()
    scaled[:, 2] *= 1e3
    a = TreeEnsembleClassifier(n_trees=20, random_state=6).fit(X, y)
    b = TreeEnsembleClassifier(n_trees=20, random_state=6).fit(scaled, y)
    np.testing.assert_array_equal(a.predict(X), b.predict(scaled))


def test_sklearn_contract():
    clf = TreeEnsembleClassifier(n_trees=3, max_depth=2)
    assert clone(clf).get_params()["max_depth"] == 2
    X, y = _clusters(0)
    assert 0 <= clf.fit(X, y).score(X, y) <= 1
    np.testing.assert_allclose(clf.feature_importances_.sum(), 1.0)
    with pytest.raises(ValueError):
        clf.predict(X[:, :2])

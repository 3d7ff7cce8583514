"""Bagged CART ensemble (Gini impurity, hard majority vote).

Training rows are put in a canonical lexicographic order before bootstrap
indices are drawn, so the fitted forest does not depend on how the caller
happened to order the rows. Every tree draws from its own seed-indexed
substream, which keeps results identical for any ``n_jobs``. Individual trees
are sklearn's ``DecisionTreeClassifier``; bagging, seeding and voting live
here.
"""

from __future__ import annotations

import math

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.tree import DecisionTreeClassifier
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import SingleClass
from .types import canonical_class_order

_SEED_SPACE = 2**31 - 1


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, math.ceil(math.log2(n_features)))
    if isinstance(max_features, float):
        return max(1, min(n_features, int(math.ceil(max_features * n_features))))
    return max(1, min(n_features, int(max_features)))


def _fit_one(X, y, seed, index, bootstrap, max_features, max_depth, min_samples_split):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    weight = None
    if bootstrap:
        draws = rng.integers(0, X.shape[0], X.shape[0])
        weight = np.bincount(draws, minlength=X.shape[0]).astype(np.float64)
    tree = DecisionTreeClassifier(
        criterion="gini",
        max_depth=max_depth,
        min_samples_split=min_samples_split,
        max_features=max_features,
        random_state=int(rng.integers(_SEED_SPACE)),
    )
    if weight is not None:
        keep = weight > 0
        tree.fit(X[keep], y[keep], sample_weight=weight[keep])
    else:
        tree.fit(X, y)
    return tree


class TreeEnsembleClassifier(ClassifierMixin, BaseEstimator):
    """Random forest of CART trees voting by simple majority.

    Parameters
    ----------
    n_trees : int, default=100
    max_depth : int or None, default=None
        ``None`` grows trees until leaves are pure or too small to split.
    min_samples_split : int, default=2
    max_features : {"sqrt", "log2"}, int, float or None, default="sqrt"
        Features examined per split; ``"sqrt"`` means ``ceil(sqrt(d))``.
    bootstrap : bool, default=True
    random_state : int, default=0
    n_jobs : int, default=1
        Threads used to grow trees and vote. Does not change the result.

    Attributes
    ----------
    classes_ : ndarray
        Class labels in canonical order (known labels first, in enumeration
        order). Vote ties go to the earliest class in this order.
    feature_importances_ : ndarray
        Mean over trees of the normalised Gini impurity decrease.
    """

    def __init__(self, n_trees=100, max_depth=None, min_samples_split=2, max_features="sqrt",
                 bootstrap=True, random_state=0, n_jobs=1):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, ensure_all_finite=True)
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        y = np.asarray(y)
        order = canonical_class_order(np.unique(y))
        if len(order) < 2:
            raise SingleClass(f"training data holds a single class ({order[0]!r})")
        self.classes_ = np.array(order, dtype=y.dtype)
        lookup = {c: i for i, c in enumerate(order)}
        y_idx = np.array([lookup[v] for v in y], dtype=np.intp)

        canon = np.lexsort(np.column_stack([X, y_idx]).T[::-1])
        X, y_idx = np.ascontiguousarray(X[canon]), y_idx[canon]

        self.n_features_in_ = X.shape[1]
        self.max_features_ = resolve_max_features(self.max_features, X.shape[1])
        seed = 0 if self.random_state is None else int(self.random_state)
        args = (self.bootstrap, self.max_features_, self.max_depth, self.min_samples_split)
        if self.n_jobs in (None, 1):
            trees = [_fit_one(X, y_idx, seed, i, *args) for i in range(self.n_trees)]
        else:
            trees = Parallel(n_jobs=self.n_jobs, prefer="threads")(
                delayed(_fit_one)(X, y_idx, seed, i, *args) for i in range(self.n_trees))
        self.estimators_ = trees
        self.feature_importances_ = np.mean([t.feature_importances_ for t in trees], axis=0)
        return self

    def _tree_votes(self, tree, X):
        # a bootstrap sample may miss a class; map the tree's classes back
        leaf_class = tree.classes_[np.argmax(tree.predict_proba(X), axis=1)]
        return leaf_class.astype(np.intp)

    def votes(self, X):
        """Per-class vote counts, shape ``(n_samples, n_classes)``."""
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = np.zeros((X.shape[0], self.classes_.size))
        rows = np.arange(X.shape[0])
        for tree in self.estimators_:
            np.add.at(out, (rows, self._tree_votes(tree, X)), 1.0)
        return out

    def predict_proba(self, X):
        v = self.votes(X)
        return v / v.sum(axis=1, keepdims=True)

    def predict(self, X):
        # argmax takes the first maximum, so ties go to the earliest canonical class
        return self.classes_[np.argmax(self.votes(X), axis=1)]

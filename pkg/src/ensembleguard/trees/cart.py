"""CART classifier and bootstrap-aggregated forests of them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree import Tree, grow_gini_tree, sorted_order


def _xy(train, y=None):
    if y is None:
        return np.asarray(train.matrix, dtype=np.float64), np.asarray(train.labels, dtype=np.int64), train.n_classes
    y = np.asarray(y, dtype=np.int64)
    return np.asarray(train, dtype=np.float64), y, None


def train_cart(train, y=None, *, max_depth=None, min_samples_leaf=1, n_classes=None,
               sample_weight=None) -> Tree:
    """Fit one Gini tree.

    ``train`` is an :class:`~ensembleguard.preprocess.EncodedDataset`, or a
    feature matrix when ``y`` is given.  ``max_depth=None`` grows until the
    leaves are pure or too small to split.
    """
    X, y, c = _xy(train, y)
    if n_classes is None:
        n_classes = c if c is not None else int(y.max()) + 1
    if X.shape[0] < 1:
        raise ValueError("cannot fit a tree on zero records")
    w = np.ones(X.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    return grow_gini_tree(X, y, w, n_classes, max_depth=max_depth,
                          min_samples_leaf=min_samples_leaf)


@dataclass(eq=False)
class BaggedEnsemble:
    trees: list[Tree]
    n_estimators: int
    seed: int
    n_classes: int
    n_features: int
    params: dict = field(default_factory=dict)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        acc = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            acc += tree.predict_value(X)
        return acc / len(self.trees)


def bootstrap_weights(n: int, seed: int, index: int) -> np.ndarray:
    """Draw counts of a size-n bootstrap sample from substream (seed, index)."""
    rng = np.random.default_rng([seed, index])
    return np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)


def train_bagging(train, y=None, *, n_estimators=1000, seed=0, max_depth=None,
                  min_samples_leaf=1, n_classes=None, bootstrap=True) -> BaggedEnsemble:
    """Average of ``n_estimators`` CART trees, each fit on its own bootstrap draw.

    Bootstrap draws are expressed as integer sample weights, so the per-feature
    sort order is computed once and shared by every tree.  ``bootstrap=False``
    is a test hook that fits every tree on the full data.
    """
    X, y, c = _xy(train, y)
    if n_classes is None:
        n_classes = c if c is not None else int(y.max()) + 1
    n = X.shape[0]
    if n < 1:
        raise ValueError("cannot bag over zero records")
    if n_estimators < 1:
        raise ValueError("n_estimators must be positive")
    order = sorted_order(X)
    XT = np.ascontiguousarray(X.T)
    trees = []
    for t in range(n_estimators):
        w = bootstrap_weights(n, seed, t) if bootstrap else np.ones(n)
        trees.append(grow_gini_tree(X, y, w, n_classes, order=order, max_depth=max_depth, XT=XT,
                                    min_samples_leaf=min_samples_leaf))
    params = {"max_depth": max_depth, "min_samples_leaf": min_samples_leaf, "bootstrap": bootstrap}
    return BaggedEnsemble(trees, n_estimators, seed, n_classes, X.shape[1], params)

"""Multiclass gradient boosting with four flavors.

All flavors minimise softmax cross-entropy with one regression tree per
class per round, starting from log class priors:

``gbm``    exact level-wise splits, leaves = mean residual (first order)
``light``  pre-binned histograms, best-first growth up to ``max_leaves``
``xgb``    exact level-wise splits, Newton leaves ``sum(r) / (sum(h) + lambda)``
``cat``    oblivious trees plus ordered target statistics for
           categorical-coded features

Residuals are ``r = y - p`` (the negative gradient) and hessians are the
diagonal ``p (1 - p)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .tree import (Tree, bin_edges, bin_matrix, grow_leafwise_tree, grow_newton_tree,
                   grow_oblivious_tree, sorted_order)

FLAVORS = ("gbm", "light", "xgb", "cat")

# prior weight of the ordered target statistic
TS_PRIOR_WEIGHT = 1.0


@dataclass
class BoostConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    max_leaves: int = 31
    min_samples_leaf: int = 5
    n_bins: int = 64
    l2_lambda: float = 1.0
    oblivious: bool = True
    seed: int = 0
    # test hook: "unit" forces every hessian to 1
    hessian: str = "auto"

    def validate(self):
        for name in ("n_rounds", "max_depth", "max_leaves", "min_samples_leaf"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")
        if self.hessian not in ("auto", "unit"):
            raise ValueError("hessian must be 'auto' or 'unit'")
        return self


def softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(scores: np.ndarray, y: np.ndarray) -> float:
    m = scores.max(axis=1)
    lse = m + np.log(np.exp(scores - m[:, None]).sum(axis=1))
    return float(np.mean(lse - scores[np.arange(y.size), y]))


@dataclass(eq=False)
class TargetStats:
    """Per-category class counts used to encode one categorical feature."""
    feature: int
    codes: np.ndarray      # sorted category codes seen in training
    counts: np.ndarray     # records per code
    sums: np.ndarray       # (n_codes, C) class counts per code

    def encode(self, values: np.ndarray, prior: np.ndarray, cls: int) -> np.ndarray:
        num = np.full(values.shape, TS_PRIOR_WEIGHT * prior[cls])
        den = np.full(values.shape, TS_PRIOR_WEIGHT)
        if self.codes.size:
            pos = np.minimum(np.searchsorted(self.codes, values), self.codes.size - 1)
            hit = self.codes[pos] == values
            num[hit] += self.sums[pos[hit], cls]
            den[hit] += self.counts[pos[hit]]
        return num / den


def ordered_target_stats(codes, y, n_classes, prior, perm):
    """Leak-free encoding: each record only sees records before it in ``perm``."""
    n = codes.size
    rank = np.empty(n, dtype=np.int64)
    rank[perm] = np.arange(n)
    srt = np.lexsort((rank, codes))
    c_sorted = codes[srt]
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y[srt]] = 1.0
    full = np.cumsum(onehot, axis=0)
    start = np.searchsorted(c_sorted, c_sorted, side="left")
    before = np.where(start[:, None] > 0, full[start - 1], 0.0)
    seen = full - onehot - before
    cnt = np.arange(n, dtype=np.float64) - start
    a = TS_PRIOR_WEIGHT
    out = np.empty((n, n_classes))
    out[srt] = (seen + a * prior[None, :]) / (cnt[:, None] + a)
    return out


@dataclass(eq=False)
class BoostedEnsemble:
    flavor: str
    init_scores: np.ndarray
    rounds: list[list[Tree]]
    learning_rate: float
    config: BoostConfig
    n_features: int
    categorical: tuple = ()
    target_stats: list[TargetStats] = field(default_factory=list)
    prior: np.ndarray | None = None
    train_loss: list[float] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return int(self.init_scores.shape[0])

    def class_inputs(self, X: np.ndarray, cls: int) -> np.ndarray:
        if not self.target_stats:
            return X
        Xc = X.copy()
        for ts in self.target_stats:
            Xc[:, ts.feature] = ts.encode(X[:, ts.feature], self.prior, cls)
        return Xc

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        F = np.tile(self.init_scores, (X.shape[0], 1))
        for c in range(self.n_classes):
            Xc = self.class_inputs(X, c)
            acc = np.zeros(X.shape[0])
            for trees in self.rounds:
                acc += trees[c].predict_value(Xc)[:, 0]
            F[:, c] += self.learning_rate * acc
        return F

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(X))


def train_boosted(train, y=None, config: BoostConfig | None = None, *, flavor="gbm",
                  n_classes=None, categorical=()) -> BoostedEnsemble:
    """Fit a boosted ensemble.

    ``train`` is an EncodedDataset (categorical features are taken from its
    schema) or a matrix accompanied by ``y``.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    config = (config or BoostConfig()).validate()
    if y is None:
        X = np.asarray(train.matrix, dtype=np.float64)
        y = np.asarray(train.labels, dtype=np.int64)
        n_classes = train.n_classes if n_classes is None else n_classes
        categorical = tuple(train.categorical)
    else:
        X = np.asarray(train, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
    X = np.ascontiguousarray(X)
    n, p = X.shape
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if n_classes < 2:
        raise ValueError("boosting needs at least two classes")
    if n < 1:
        raise ValueError("cannot boost over zero records")
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    prior = counts / n
    with np.errstate(divide="ignore"):
        init = np.log(prior)
    model = BoostedEnsemble(flavor, init, [], config.learning_rate, config, p,
                            tuple(int(j) for j in categorical), prior=prior)
    F = np.tile(init, (n, 1))
    model.train_loss.append(cross_entropy(F, y))
    if np.count_nonzero(counts) < 2:
        return model

    # per-class design matrices (ordered target statistics only for cat)
    inputs = [X] * n_classes
    if flavor == "cat" and model.categorical:
        rng = np.random.default_rng([config.seed, 7])
        perm = rng.permutation(n)
        inputs = [X.copy() for _ in range(n_classes)]
        for j in model.categorical:
            codes = X[:, j]
            ts = ordered_target_stats(codes, y, n_classes, prior, perm)
            for c in range(n_classes):
                inputs[c][:, j] = ts[:, c]
            uniq, inv = np.unique(codes, return_inverse=True)
            sums = np.zeros((uniq.size, n_classes))
            np.add.at(sums, (inv, y), 1.0)
            model.target_stats.append(
                TargetStats(j, uniq, np.bincount(inv).astype(np.float64), sums))
    base_order = sorted_order(X)
    orders = []
    for c in range(n_classes):
        if inputs[c] is X:
            orders.append(base_order)
        else:
            o = base_order.copy()
            for j in model.categorical:
                o[j] = np.argsort(inputs[c][:, j], kind="stable")
            orders.append(o)
    XT = np.ascontiguousarray(X.T)
    XTs = [XT if inp is X else np.ascontiguousarray(inp.T) for inp in inputs]
    if flavor == "light":
        edges = [bin_edges(X[:, f], config.n_bins) for f in range(p)]
        binned = bin_matrix(X, edges)
        n_bins = max([len(e) for e in edges] + [0]) + 1

    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    lam = 0.0 if flavor == "gbm" else config.l2_lambda
    for _ in range(config.n_rounds):
        P = softmax(F)
        R = Y - P
        H = np.ones_like(P) if (flavor == "gbm" or config.hessian == "unit") else P * (1.0 - P)
        trees = []
        for c in range(n_classes):
            r, h = R[:, c], H[:, c]
            if flavor in ("gbm", "xgb"):
                tree = grow_newton_tree(X, r, h, lam, order=orders[c], max_depth=config.max_depth,
                                        min_samples_leaf=config.min_samples_leaf, XT=XT)
            elif flavor == "light":
                tree = grow_leafwise_tree(binned, edges, r, h, lam, max_leaves=config.max_leaves,
                                          min_samples_leaf=config.min_samples_leaf, n_bins=n_bins)
            elif config.oblivious:
                tree = grow_oblivious_tree(inputs[c], r, h, lam, order=orders[c],
                                           max_depth=config.max_depth, XT=XTs[c])
            else:
                tree = grow_newton_tree(inputs[c], r, h, lam, order=orders[c],
                                        max_depth=config.max_depth, XT=XTs[c],
                                        min_samples_leaf=config.min_samples_leaf)
            trees.append(tree)
        for c, tree in enumerate(trees):
            F[:, c] += config.learning_rate * tree.predict_value(inputs[c])[:, 0]
        model.rounds.append(trees)
        model.train_loss.append(cross_entropy(F, y))
    return model


def config_items(config: BoostConfig) -> dict:
    return asdict(config)

"""Tree learners: CART, bagging and the multi-flavor boosting engine."""
import numpy as np

from .boosting import FLAVORS, BoostConfig, BoostedEnsemble, train_boosted
from .cart import BaggedEnsemble, train_bagging, train_cart
from .tree import Tree


def predict_proba(model, x) -> np.ndarray:
    """Class distribution(s) from any tree model.

    ``x`` is one feature vector or a matrix of them; the result has the same
    leading shape with one probability per class.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} features, got shape {tuple(x.shape)}")
    P = model.predict_proba(X)
    return P[0] if single else P


__all__ = [
    "FLAVORS", "BoostConfig", "BoostedEnsemble", "BaggedEnsemble", "Tree",
    "predict_proba", "train_bagging", "train_boosted", "train_cart",
]

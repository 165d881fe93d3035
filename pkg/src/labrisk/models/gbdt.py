"""Gradient boosting on the logistic loss.

Each round fits a least-squares regression tree to the weighted residuals
``y - p`` (the negative gradient) and then replaces every leaf value with a
regularised Newton step ``sum(w r) / (sum(w p (1 - p)) + reg_lambda)``. The
margin moves by ``learning_rate`` times the leaf value.
"""

import numpy as np

from .. import _kernels
from .base import FittedModel, check_binary, sigmoid
from .tree import Tree, gain_importance, grow_tree, presort


def weighted_logloss(y, margin, w):
    return float(np.sum(w * (np.logaddexp(0.0, margin) - y * margin)) / np.sum(w))


class GBDTModel(FittedModel):
    family = "gbdt"

    def __init__(self, base_margin, learning_rate, trees, n_features, meta=None):
        super().__init__(n_features, meta)
        self.base_margin = float(base_margin)
        self.learning_rate = float(learning_rate)
        self.trees = list(trees)

    def margin(self, X):
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        out = np.full(X.shape[0], self.base_margin)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def _proba(self, X):
        return sigmoid(self.margin(X))

    def feature_importances(self):
        imp = np.zeros(self.n_features)
        for t in self.trees:
            imp += gain_importance(t, self.n_features)
        total = imp.sum()
        return imp / total if total > 0 else imp

    def _params(self):
        return {"base_margin": self.base_margin, "learning_rate": self.learning_rate,
                "trees": [t.to_dict() for t in self.trees]}


def fit_gbdt(X, y, sample_weight=None, n_estimators=100, max_depth=3, learning_rate=0.1,
             subsample=1.0, seed=0, reg_lambda=1.0, min_samples_leaf=1):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y, w = check_binary(y, sample_weight)
    n, d = X.shape
    base = float(np.clip(np.sum(w * y) / np.sum(w), 1e-12, 1 - 1e-12))
    base_margin = float(np.log(base / (1.0 - base)))
    margin = np.full(n, base_margin)
    losses = [weighted_logloss(y, margin, w)]
    trees = []
    if learning_rate == 0:
        n_estimators = 0  # every tree would contribute exactly zero
    order = presort(X)
    n_sub = max(1, int(round(subsample * n)))
    for m in range(int(n_estimators)):
        rng = np.random.default_rng([int(seed), m])
        in_bag = np.zeros(n, dtype=bool)
        if n_sub < n:
            in_bag[rng.choice(n, size=n_sub, replace=False)] = True
        else:
            in_bag[:] = True
        p = sigmoid(margin)
        r = y - p
        tree = grow_tree(
            X, w * r, w, in_bag, order,
            criterion=_kernels.LEAST_SQUARES, max_depth=max_depth,
            min_samples_split=2, min_samples_leaf=min_samples_leaf,
            max_features=d, seed=int(rng.integers(0, 2**63)),
        )
        leaf = tree.apply(X)
        bag_leaf = leaf[in_bag]
        num = np.bincount(bag_leaf, weights=(w * r)[in_bag], minlength=tree.n_nodes)
        den = np.bincount(bag_leaf, weights=(w * p * (1.0 - p))[in_bag], minlength=tree.n_nodes)
        values = np.where(tree.is_leaf, num / (den + reg_lambda), 0.0)
        tree.value = values
        margin = margin + learning_rate * values[leaf]
        trees.append(tree)
        losses.append(weighted_logloss(y, margin, w))
    return GBDTModel(base_margin, learning_rate, trees, d, meta={
        "n_estimators": len(trees), "max_depth": max_depth, "subsample": float(subsample),
        "reg_lambda": float(reg_lambda), "seed": int(seed), "train_loss": losses,
        "kernel_backend": _kernels.BACKEND,
    })


def gbdt_from_params(n_features, params, meta):
    return GBDTModel(params["base_margin"], params["learning_rate"],
                     [Tree.from_dict(t) for t in params["trees"]], n_features, meta)

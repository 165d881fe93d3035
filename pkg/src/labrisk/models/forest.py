import numpy as np

from .. import _kernels
from .base import FittedModel, check_binary
from .tree import Tree, gini_importance, grow_tree, presort


class ForestModel(FittedModel):
    family = "random_forest"

    def __init__(self, trees, n_features, meta=None):
        super().__init__(n_features, meta)
        self.trees = list(trees)

    def tree_proba(self, X):
        """Per-tree class-1 leaf fractions, shape (n_trees, n_rows)."""
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        return np.stack([t.predict(X) for t in self.trees])

    def _proba(self, X):
        return self.tree_proba(X).mean(axis=0)

    def feature_importances(self):
        per_tree = []
        for t in self.trees:
            imp = gini_importance(t, self.n_features)
            total = imp.sum()
            per_tree.append(imp / total if total > 0 else imp)
        imp = np.mean(per_tree, axis=0)
        total = imp.sum()
        return imp / total if total > 0 else imp

    def _params(self):
        return {"trees": [t.to_dict() for t in self.trees]}


def fit_random_forest(X, y, sample_weight=None, n_estimators=100, max_depth=None,
                      min_samples_split=2, min_samples_leaf=1, seed=0, max_features="sqrt"):
    """Bagged Gini CART trees.

    Bootstrap draws become integer multiplicities folded into the row weights;
    ``min_samples_*`` count distinct in-bag rows. Tree ``t`` draws everything
    from ``default_rng([seed, t])``, so a forest is a pure function of its
    seed and trees could be grown in any order.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y, w = check_binary(y, sample_weight)
    n, d = X.shape
    if max_features == "sqrt":
        m = max(1, int(np.sqrt(d)))
    elif max_features is None:
        m = d
    else:
        m = int(max_features)
    order = presort(X)
    trees = []
    for t in range(int(n_estimators)):
        rng = np.random.default_rng([int(seed), t])
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        h = w * counts
        in_bag = h > 0
        if not in_bag.any():
            continue
        tree = grow_tree(
            X, h * y, h, in_bag, order,
            criterion=_kernels.GINI, max_depth=max_depth,
            min_samples_split=min_samples_split, min_samples_leaf=min_samples_leaf,
            max_features=m, seed=int(rng.integers(0, 2**63)),
        )
        trees.append(tree)
    return ForestModel(trees, d, meta={
        "n_estimators": int(n_estimators), "max_depth": max_depth,
        "min_samples_split": int(min_samples_split), "min_samples_leaf": int(min_samples_leaf),
        "max_features": m, "seed": int(seed), "kernel_backend": _kernels.BACKEND,
    })


def forest_from_params(n_features, params, meta):
    return ForestModel([Tree.from_dict(t) for t in params["trees"]], n_features, meta)

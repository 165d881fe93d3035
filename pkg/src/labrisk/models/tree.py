"""Array-backed binary trees shared by the forest and the boosting engine."""

from dataclasses import dataclass

import numpy as np

from .. import _kernels


def presort(X):
    """Per-feature row order, ties broken by row index. Shape (n_features, n_rows)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


def restrict_order(order, in_bag):
    """Keep only in-bag rows of a presorted order, preserving sortedness."""
    if in_bag.all():
        return order.copy()
    d = order.shape[0]
    return np.ascontiguousarray(order[in_bag[order]].reshape(d, -1))


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    node_g: np.ndarray
    node_h: np.ndarray
    node_n: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def is_leaf(self):
        return self.feature < 0

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X):
        return self.value[self.apply(X)]

    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "node_g": self.node_g.tolist(),
            "node_h": self.node_h.tolist(),
            "node_n": self.node_n.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
            node_g=np.asarray(d["node_g"], dtype=np.float64),
            node_h=np.asarray(d["node_h"], dtype=np.float64),
            node_n=np.asarray(d["node_n"], dtype=np.int64),
        )


def grow_tree(X, g, h, in_bag, presorted, *, criterion, max_depth=-1,
              min_samples_split=2, min_samples_leaf=1, max_features=0, seed=0):
    """Grow one CART tree on the rows flagged in ``in_bag``.

    ``g`` and ``h`` are the per-row numerator and denominator statistics:
    (weight * label, weight) for Gini trees, (weight * residual, weight) for
    least-squares trees. Node values are ``node_g / node_h``.
    """
    rows = np.flatnonzero(in_bag).astype(np.int64)
    order = restrict_order(presorted, in_bag)
    feature, threshold, left, right, node_g, node_h, node_n = _kernels.build_tree(
        X, g, h, rows, order, int(criterion),
        -1 if max_depth is None else int(max_depth),
        int(min_samples_split), int(min_samples_leaf), int(max_features),
        int(seed) & ((1 << 64) - 1),
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(node_h > 0, node_g / node_h, 0.0)
    return Tree(feature, threshold, left, right, value, node_g, node_h, node_n)


def gini_importance(tree, n_features):
    """Weighted impurity decrease per feature (unnormalised)."""
    out = np.zeros(n_features)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tree.node_h > 0, tree.node_g / tree.node_h, 0.0)
    impurity = 2.0 * p * (1.0 - p) * tree.node_h
    for node in np.flatnonzero(tree.feature >= 0):
        l, r = tree.left[node], tree.right[node]
        out[tree.feature[node]] += impurity[node] - impurity[l] - impurity[r]
    return out


def gain_importance(tree, n_features):
    """Least-squares gain per feature, from the stored node sums."""
    out = np.zeros(n_features)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(tree.node_h > 0, tree.node_g ** 2 / tree.node_h, 0.0)
    for node in np.flatnonzero(tree.feature >= 0):
        l, r = tree.left[node], tree.right[node]
        out[tree.feature[node]] += score[l] + score[r] - score[node]
    return out

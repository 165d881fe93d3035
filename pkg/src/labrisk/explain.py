"""Shapley attributions in margin (log-odds) space.

Logistic models get the closed form ``beta_j * (x_j - mean_j(background))``.
Every other model gets a permutation estimate: features are switched from
background values to the explained row's values in random order, and each
feature is credited with the change in mean background margin. Permutations
come in antithetic (reversed) pairs. The credits of one permutation always
sum to ``margin(x) - base_value``, so local accuracy holds for every row.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class ExplainError(ValueError):
    pass


@dataclass
class ShapExplanation:
    base_value: float
    values: np.ndarray          # rows x features
    features: tuple
    margins: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    @property
    def ranking(self):
        return [f for f, _ in global_importance(self)]

    def local_accuracy_error(self):
        return np.abs(self.base_value + self.values.sum(axis=1) - self.margins)


def _names(features, d):
    features = tuple(features) if features is not None else tuple(f"x{j}" for j in range(d))
    if len(features) != d:
        raise ExplainError("feature names do not match column count")
    return features


def background_sample(X, size=100, seed=0):
    """Seeded subsample (without replacement) of ``size`` rows, original order."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) <= size:
        return X.copy()
    idx = np.sort(np.random.default_rng(int(seed)).choice(len(X), size=size, replace=False))
    return X[idx]


def linear_shap(model, X, background, features=None):
    if getattr(model, "family", None) != "logreg":
        raise ExplainError("linear_shap needs a logistic model")
    X = np.asarray(X, dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    beta = np.asarray(model.coef, dtype=np.float64)
    mu = bg.mean(axis=0)
    phi = beta * (X - mu)
    base = float(beta @ mu + model.intercept)
    margins = model.decision_function(X)
    return ShapExplanation(base, phi, _names(features, X.shape[1]), margins, "linear",
                           {"n_background": len(bg)})


def model_margin(model, X):
    """Log-odds of the clipped predicted probability."""
    return model.margin(X)


def sampling_shap(model, X, background, n_permutations=200, seed=0, features=None,
                  margin_fn=None):
    """Permutation Shapley estimate with an interventional background.

    ``n_permutations`` is rounded up to an even count (antithetic pairs).
    Row ``i`` draws its permutations from ``default_rng([seed, i])``.
    """
    if n_permutations < 2:
        raise ExplainError("n_permutations must be at least 2")
    f = margin_fn or (lambda Z: model_margin(model, Z))
    X = np.asarray(X, dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    n, m = X.shape
    B = len(bg)
    pairs = (int(n_permutations) + 1) // 2
    base = float(np.mean(f(bg)))
    phi = np.zeros((n, m))
    margins = np.empty(n)
    steps = np.arange(m + 1)
    for i in range(n):
        rng = np.random.default_rng([int(seed), i])
        perms = []
        for _ in range(pairs):
            p = rng.permutation(m)
            perms.extend((p, p[::-1]))
        # one stacked batch: for each permutation, m+1 coalitions x B background rows
        Z = np.empty((len(perms), m + 1, B, m))
        for q, p in enumerate(perms):
            # coalition t switches on the first t features of p
            on = np.empty((m + 1, m), dtype=bool)
            on[:, p] = np.arange(m)[None, :] < steps[:, None]
            Z[q] = np.where(on[:, None, :], X[i][None, None, :], bg[None, :, :])
        vals = f(Z.reshape(-1, m)).reshape(len(perms), m + 1, B).mean(axis=2)
        delta = np.diff(vals, axis=1)  # credit of the t-th switched feature
        contrib = np.zeros(m)
        for q, p in enumerate(perms):
            contrib[p] += delta[q]
        phi[i] = contrib / len(perms)
        margins[i] = vals[0, -1]
    return ShapExplanation(base, phi, _names(features, m), margins, "sampling",
                           {"n_permutations": 2 * pairs, "n_background": B, "seed": int(seed)})


def explain_model(model, X, background, n_permutations=200, seed=0, features=None):
    if getattr(model, "family", None) == "logreg":
        return linear_shap(model, X, background, features)
    return sampling_shap(model, X, background, n_permutations, seed, features)


def global_importance(e):
    """``[(feature, mean |attribution|)]``, descending; ties alphabetical."""
    imp = np.abs(e.values).mean(axis=0) if len(e.values) else np.zeros(len(e.features))
    pairs = [(f, float(v)) for f, v in zip(e.features, imp)]
    return sorted(pairs, key=lambda t: (-t[1], t[0]))


def beeswarm_export(e, X):
    """Long table: one record per (row, feature) with attribution and value."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape != e.values.shape:
        raise ExplainError("feature matrix does not match the explanation")
    n, m = X.shape
    return pd.DataFrame({
        "feature": np.tile(np.asarray(e.features, dtype=object), n),
        "row": np.repeat(np.arange(n), m),
        "attribution": e.values.ravel(),
        "value": X.ravel(),
    })


def write_global_csv(e, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "mean_abs_attribution"])
        for rank, (f, v) in enumerate(global_importance(e), 1):
            w.writerow([rank, f, repr(v)])


def write_attributions_csv(e, path):
    df = pd.DataFrame(e.values, columns=list(e.features))
    df.insert(0, "row", np.arange(len(df)))
    df["base_value"] = e.base_value
    df["margin"] = e.margins
    df.to_csv(path, index=False)


def write_beeswarm_csv(e, X, path):
    beeswarm_export(e, X).to_csv(path, index=False)

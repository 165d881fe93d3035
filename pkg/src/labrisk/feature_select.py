"""Three feature-set routes: ANOVA-F top-k, recursive elimination with a
class-weighted forest, and the fixed 15-marker clinical panel. The number of
features for the automated routes comes from ``rfecv_choose_k``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .evaluate import roc_auc
from .features import MANUAL_PANEL
from .models import fit_gbdt, fit_random_forest
from .resample import sample_weights
from .seeding import derive_seed
from .splits import SplitError, grouped_kfold

logger = logging.getLogger(__name__)

ROUTES = ("univariate", "rfe", "manual")
ROUTE_DISPLAY = {"univariate": "Univariate", "rfe": "RFE", "manual": "Manual"}


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSetSpec:
    route: str
    k: int | None
    selected: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.route not in ROUTES:
            raise ValueError(f"unknown feature route {self.route!r}")

    def to_dict(self):
        return {"route": self.route, "k": self.k, "selected": list(self.selected), **self.meta}


def _names(names, d):
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(d))
    if len(names) != d:
        raise SelectionError("names do not match column count")
    return names


def anova_f(X, y):
    """One-way ANOVA F statistic of each column between the two classes.

    A column constant within both classes and equal across them scores 0;
    constant within classes but separated scores +inf.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    n = len(y)
    groups = [X[y == c] for c in (0, 1)]
    if min(len(g) for g in groups) == 0:
        raise SelectionError("ANOVA needs both classes")
    grand = X.mean(axis=0)
    ssb = sum(len(g) * (g.mean(axis=0) - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean(axis=0)) ** 2).sum(axis=0) for g in groups)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ssb / 1.0) / (ssw / (n - 2))
    f = np.where(np.isnan(f), 0.0, f)
    return f


def univariate_top_k(X, y, k, names=None):
    X = np.asarray(X, dtype=np.float64)
    names = _names(names, X.shape[1])
    if not 1 <= k <= X.shape[1]:
        raise SelectionError(f"k={k} outside [1, {X.shape[1]}]")
    f = anova_f(X, y)
    order = np.argsort(-f, kind="stable")[:k]
    return FeatureSetSpec("univariate", int(k), tuple(names[j] for j in order),
                          {"scores": {names[j]: float(f[j]) for j in range(len(names))}})


def _forest_importance(X, y, seed, n_estimators, max_depth):
    model = fit_random_forest(X, y, sample_weights(y), n_estimators=n_estimators,
                              max_depth=max_depth, seed=seed)
    return model.feature_importances()


def elimination_order(X, y, stop_at=1, seed=0, n_estimators=50, max_depth=None):
    """Features removed one per step, lowest forest Gini importance first.

    Step ``s`` fits its forest with a seed derived from ``(seed, s)`` so any shorter run is a
    prefix of a longer one. Returns ``(removed, survivors)`` as column indices.
    """
    X = np.asarray(X, dtype=np.float64)
    alive = list(range(X.shape[1]))
    removed = []
    step = 0
    while len(alive) > stop_at:
        imp = _forest_importance(X[:, alive], y, derive_seed(seed, step), n_estimators, max_depth)
        drop = int(np.argmin(imp))  # first index on ties
        removed.append(alive.pop(drop))
        step += 1
    return removed, alive


def rfe(X, y, k, names=None, seed=0, n_estimators=50, max_depth=None):
    X = np.asarray(X, dtype=np.float64)
    names = _names(names, X.shape[1])
    if not 1 <= k <= X.shape[1]:
        raise SelectionError(f"k={k} outside [1, {X.shape[1]}]")
    removed, alive = elimination_order(X, y, stop_at=k, seed=seed, n_estimators=n_estimators,
                                       max_depth=max_depth)
    return FeatureSetSpec("rfe", int(k), tuple(names[j] for j in alive),
                          {"eliminated": [names[j] for j in removed]})


def manual_panel():
    return FeatureSetSpec("manual", None, MANUAL_PANEL)


def k_grid(d, max_all=30):
    """Candidate feature counts: every k up to ``max_all`` columns, else a
    geometric ladder from 1 to ``d`` (ratio ~1.4)."""
    if d <= max_all:
        return list(range(1, d + 1))
    ks = {1, d}
    v = 1.0
    while v < d:
        ks.add(int(round(v)))
        v *= 1.4
    return sorted(k for k in ks if 1 <= k <= d)


def rfecv_choose_k(X, y, groups, folds=5, seed=0, n_estimators=50, max_depth=3,
                   learning_rate=0.1, max_all=30):
    """Feature count maximizing mean grouped-CV ROC AUC along a boosted-tree
    elimination path. Ties go to the smallest k.

    Within each fold the boosted model is refit at each candidate count and the
    lowest gain-importance features are dropped to reach the next count.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    d = X.shape[1]
    grid = k_grid(d, max_all)
    if len(np.unique(groups)) < folds:
        raise SelectionError(f"fewer than {folds} distinct groups")
    if d == 1:
        return 1
    try:
        splits = grouped_kfold(groups, folds, seed)
    except SplitError as exc:
        raise SelectionError(str(exc)) from exc
    scores = np.full((folds, len(grid)), np.nan)
    for f, (fit_idx, score_idx) in enumerate(splits):
        yf, ys = y[fit_idx], y[score_idx]
        if len(np.unique(yf)) < 2 or len(np.unique(ys)) < 2:
            logger.warning("rfecv fold %d lacks a class; skipped", f)
            continue
        alive = list(range(d))
        for gi in range(len(grid) - 1, -1, -1):
            k = grid[gi]
            model = fit_gbdt(X[np.ix_(fit_idx, alive)], yf, None, n_estimators=n_estimators,
                             max_depth=max_depth, learning_rate=learning_rate,
                             seed=derive_seed(seed, f))
            scores[f, gi] = roc_auc(model.predict_proba(X[np.ix_(score_idx, alive)]), ys)
            if gi > 0:
                drop = np.argsort(model.feature_importances(), kind="stable")[:k - grid[gi - 1]]
                alive = [a for i, a in enumerate(alive) if i not in set(drop.tolist())]
    if np.isnan(scores).all():
        raise SelectionError("no usable rfecv fold")
    mean = np.nanmean(scores, axis=0)
    best = int(np.flatnonzero(mean == mean.max())[0])
    return int(grid[best])


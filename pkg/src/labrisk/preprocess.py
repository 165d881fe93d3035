"""Missingness filter, inflammation ratios, chained-equations imputation and
robust scaling.

Everything is fitted on training rows and then frozen: ``apply_preprocess``
replays the fitted transform on any other split without touching the state.
"""

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .features import CATEGORICAL_FEATURES, SEX_CODES

logger = logging.getLogger(__name__)


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """Visit rows x named feature columns; NaN marks a missing value."""

    values: np.ndarray
    columns: tuple
    subject_ids: np.ndarray
    labels: np.ndarray
    partition: np.ndarray | None = None
    dropped: tuple = ()

    def __post_init__(self):
        if self.values.shape != (len(self.subject_ids), len(self.columns)):
            raise ValueError("values shape does not match rows/columns")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")

    @property
    def n_rows(self):
        return self.values.shape[0]

    def column(self, name):
        return self.values[:, self.columns.index(name)]

    def select(self, names):
        idx = [self.columns.index(c) for c in names]
        return replace(self, values=self.values[:, idx], columns=tuple(names))

    def rows(self, mask_or_idx):
        part = None if self.partition is None else self.partition[mask_or_idx]
        return replace(self, values=self.values[mask_or_idx],
                       subject_ids=self.subject_ids[mask_or_idx],
                       labels=self.labels[mask_or_idx], partition=part)

    def partitions(self):
        return set() if self.partition is None else set(np.unique(self.partition).tolist())


def matrix_from_visits(visits, features, partition=None):
    """Build a FeatureMatrix from a curated visits frame.

    ``sex`` may hold the strings male/female; it is encoded 0/1.
    """
    cols = []
    for name in features:
        if name not in visits.columns:
            raise PreprocessError(f"visits frame has no column {name!r}")
        col = visits[name]
        if name == "sex" and col.dtype == object:
            col = col.map(SEX_CODES)
        cols.append(col.to_numpy(dtype=np.float64, na_value=np.nan))
    values = np.column_stack(cols) if cols else np.empty((len(visits), 0))
    part = None if partition is None else np.asarray(partition)
    return FeatureMatrix(values, tuple(features), visits["subject_id"].to_numpy(),
                         visits["tumor_label"].to_numpy(dtype=np.int64), part)


def engineer_ratios(m):
    """Append NLR = neutrophils / lymphocytes and PLR = platelets / lymphocytes.

    A ratio is missing when an operand is missing or lymphocytes <= 0.
    """
    for name in ("neutrophils", "lymphocytes", "platelets"):
        if name not in m.columns:
            raise PreprocessError(f"ratio engineering needs column {name!r}")
    neut, lymph, plt = m.column("neutrophils"), m.column("lymphocytes"), m.column("platelets")
    ok = np.isfinite(lymph) & (lymph > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        nlr = np.where(ok & np.isfinite(neut), neut / lymph, np.nan)
        plr = np.where(ok & np.isfinite(plt), plt / lymph, np.nan)
    base = [c for c in m.columns if c not in ("nlr", "plr")]
    m = m.select(base)
    return replace(m, values=np.column_stack([m.values, nlr, plr]),
                   columns=m.columns + ("nlr", "plr"))


def missing_fractions(m):
    return np.isnan(m.values).mean(axis=0) if m.n_rows else np.zeros(len(m.columns))


def filter_missingness(m, threshold=0.70, reference=None):
    """Drop columns whose missing fraction strictly exceeds ``threshold``.

    Fractions come from ``reference`` (the training rows) when given.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    frac = missing_fractions(reference if reference is not None else m)
    keep = [c for c, f in zip(m.columns, frac) if not f > threshold]
    dropped = tuple(c for c, f in zip(m.columns, frac) if f > threshold)
    if not keep:
        raise PreprocessError("every feature exceeds the missingness threshold")
    if dropped:
        logger.info("dropping %d features above %.0f%% missing: %s",
                    len(dropped), threshold * 100, ", ".join(dropped))
    return replace(m.select(keep), dropped=m.dropped + dropped)


# -- chained-equations imputation ------------------------------------------

@dataclass(frozen=True)
class ImputationStep:
    target: int
    predictors: tuple
    intercept: float
    coef: tuple


@dataclass(frozen=True)
class MiceState:
    columns: tuple
    medians: tuple
    visit_order: tuple
    iterations: tuple          # tuple of tuples of ImputationStep, one per pass
    change_history: tuple
    converged: bool
    ridge: float


def _ridge(Xo, yo, lam):
    xm = Xo.mean(axis=0)
    ym = yo.mean()
    Xc = Xo - xm
    gram = Xc.T @ Xc
    gram[np.diag_indices_from(gram)] += lam
    beta = np.linalg.solve(gram, Xc.T @ (yo - ym))
    return float(ym - xm @ beta), beta


def _predict(filled, rows, step):
    return step.intercept + filled[np.ix_(rows, step.predictors)] @ np.asarray(step.coef)


def mice_fit_transform(train, seed=0, max_iter=10, tol=1e-3, ridge=1e-3):
    """Single chained-equations imputation fitted on ``train``.

    Columns with missing cells are visited in increasing-missingness order;
    each is regressed (ridge, penalty ``ridge``) on every other column using
    the current fill. Initial fill is the column median. Stops after
    ``max_iter`` passes or once the largest change of an imputed cell,
    relative to its column's observed standard deviation, is below ``tol``.
    Every pass's coefficients are kept so the fit can be replayed exactly.
    """
    X = np.asarray(train.values, dtype=np.float64)
    if X.shape[1] < 2:
        raise PreprocessError("imputation needs at least two features")
    miss = np.isnan(X)
    n_obs = (~miss).sum(axis=0)
    if (n_obs == 0).any():
        empty = [c for c, k in zip(train.columns, n_obs) if k == 0]
        raise PreprocessError(f"features with no observed training values: {empty}")
    medians = np.nanmedian(X, axis=0)
    scale = np.nanstd(X, axis=0)
    scale[~(scale > 0)] = 1.0
    frac = miss.mean(axis=0)
    visit = tuple(int(j) for j in np.argsort(frac, kind="stable") if frac[j] > 0)

    filled = np.where(miss, medians, X)
    passes, history = [], []
    converged = not visit
    for _ in range(int(max_iter) if visit else 0):
        steps = []
        change = 0.0
        for j in visit:
            rows_obs = np.flatnonzero(~miss[:, j])
            rows_mis = np.flatnonzero(miss[:, j])
            preds = tuple(k for k in range(X.shape[1]) if k != j)
            b0, beta = _ridge(filled[np.ix_(rows_obs, preds)], filled[rows_obs, j], ridge)
            step = ImputationStep(j, preds, b0, tuple(beta.tolist()))
            new = _predict(filled, rows_mis, step)
            change = max(change, float(np.max(np.abs(new - filled[rows_mis, j])) / scale[j]))
            filled[rows_mis, j] = new
            steps.append(step)
        passes.append(tuple(steps))
        history.append(change)
        if change < tol:
            converged = True
            break
    state = MiceState(tuple(train.columns), tuple(medians.tolist()), visit, tuple(passes),
                      tuple(history), converged, ridge)
    return state, replace(train, values=filled)


def mice_apply(state, m):
    if tuple(m.columns) != state.columns:
        raise PreprocessError("column layout differs from the fitted imputation")
    X = np.asarray(m.values, dtype=np.float64)
    miss = np.isnan(X)
    filled = np.where(miss, np.asarray(state.medians), X)
    for steps in state.iterations:
        for step in steps:
            rows_mis = np.flatnonzero(miss[:, step.target])
            if len(rows_mis):
                filled[rows_mis, step.target] = _predict(filled, rows_mis, step)
    return replace(m, values=filled)


# -- robust scaling ----------------------------------------------------------

@dataclass(frozen=True)
class ScaleState:
    columns: tuple
    center: tuple
    q1: tuple
    q3: tuple
    divisor: tuple


def robust_scale_fit(train):
    """Median / interquartile-range scaling; categorical columns pass through."""
    X = np.asarray(train.values, dtype=np.float64)
    if np.isnan(X).any():
        raise PreprocessError("scale after imputation")
    med = np.percentile(X, 50, axis=0)
    q1 = np.percentile(X, 25, axis=0)
    q3 = np.percentile(X, 75, axis=0)
    iqr = q3 - q1
    div = np.where(iqr > 0, iqr, 1.0)
    for j, name in enumerate(train.columns):
        if name in CATEGORICAL_FEATURES:
            med[j], div[j] = 0.0, 1.0
    return ScaleState(tuple(train.columns), tuple(med.tolist()), tuple(q1.tolist()),
                      tuple(q3.tolist()), tuple(div.tolist()))


def robust_scale_apply(state, m):
    if tuple(m.columns) != state.columns:
        raise PreprocessError("column layout differs from the fitted scaler")
    X = (np.asarray(m.values, dtype=np.float64) - np.asarray(state.center)) / np.asarray(state.divisor)
    return replace(m, values=X)


# -- full preprocessing state -----------------------------------------------

@dataclass(frozen=True)
class PreprocessState:
    input_columns: tuple
    kept_features: tuple
    dropped_features: tuple
    mice: MiceState
    scale: ScaleState
    fit_seed: int
    n_fit_rows: int
    fit_partitions: tuple = field(default=())

    def to_dict(self):
        return {
            "input_columns": list(self.input_columns),
            "kept_features": list(self.kept_features),
            "dropped_features": list(self.dropped_features),
            "fit_seed": self.fit_seed,
            "n_fit_rows": self.n_fit_rows,
            "fit_partitions": list(self.fit_partitions),
            "imputation": {
                "medians": dict(zip(self.mice.columns, self.mice.medians)),
                "visit_order": [self.mice.columns[j] for j in self.mice.visit_order],
                "change_history": list(self.mice.change_history),
                "converged": self.mice.converged,
                "ridge": self.mice.ridge,
                "passes": [
                    [{"target": self.mice.columns[s.target], "intercept": s.intercept,
                      "coef": dict(zip((self.mice.columns[k] for k in s.predictors), s.coef))}
                     for s in steps]
                    for steps in self.mice.iterations
                ],
            },
            "scaling": {
                name: {"median": c, "q1": a, "q3": b, "divisor": dv}
                for name, c, a, b, dv in zip(self.scale.columns, self.scale.center,
                                             self.scale.q1, self.scale.q3, self.scale.divisor)
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def fit_preprocess(train, seed=0, missing_threshold=0.70, max_iter=10, tol=1e-3, ridge=1e-3,
                   add_ratios=True):
    """Fit ratios -> missingness filter -> imputation -> scaling on ``train``."""
    if add_ratios:
        train = engineer_ratios(train)
    filtered = filter_missingness(train, missing_threshold)
    mice_state, imputed = mice_fit_transform(filtered, seed=seed, max_iter=max_iter, tol=tol,
                                             ridge=ridge)
    scale_state = robust_scale_fit(imputed)
    state = PreprocessState(
        input_columns=tuple(c for c in train.columns if not (add_ratios and c in ("nlr", "plr"))),
        kept_features=filtered.columns,
        dropped_features=filtered.dropped,
        mice=mice_state,
        scale=scale_state,
        fit_seed=int(seed),
        n_fit_rows=train.n_rows,
        fit_partitions=tuple(sorted(train.partitions())),
    )
    return state, robust_scale_apply(scale_state, imputed)


def apply_preprocess(state, m):
    if "nlr" in state.kept_features or "plr" in state.kept_features or \
            ("nlr" in state.dropped_features or "plr" in state.dropped_features):
        m = engineer_ratios(m)
    m = m.select(state.kept_features)
    return robust_scale_apply(state.scale, mice_apply(state.mice, m))

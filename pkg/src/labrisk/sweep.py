"""Benchmark grid: 6 model roles x 3 feature routes x 7 balancer slots.

Stage order inside every fit is impute -> scale -> select -> balance -> fit.
Distance-based balancers need the scaled space, and selecting before
balancing keeps synthetic rows out of feature selection.

All fitting goes through a ``Workspace``, which owns the subject-grouped
split, caches per-stage preprocessing / selection / balancing, and records
which partitions each fit stage consumed. A fit stage that sees a disallowed
partition raises ``LeakageError``.
"""

import csv
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .evaluate import (confusion_at, evaluate_scores, mcc, roc_auc, select_threshold)
from .feature_select import (ROUTE_DISPLAY, ROUTES, FeatureSetSpec, manual_panel, rfe,
                             rfecv_choose_k, univariate_top_k)
from .features import DEMOGRAPHIC_FEATURES, LAB_FEATURES
from .models import PARAM_GRIDS, ROLE_DISPLAY, ROLE_FAMILY, ClassifierSpec, fit_model
from .preprocess import apply_preprocess, fit_preprocess, matrix_from_visits
from .resample import BALANCER_DISPLAY, BALANCERS, BalancerSpec, balance
from .seeding import derive_seed
from .splits import SplitSpec, group_shuffle_split, grouped_kfold

logger = logging.getLogger(__name__)

ROLES = ("logreg", "rf", "xgb_role", "lgbm_role", "mlp", "nb")
BALANCER_SLOTS = ("random_over", "random_under", "smote", "adasyn", "smote_tomek",
                  "smote_enn", "baseline")
WEIGHTED_ROLES = ("logreg", "rf")

# Small grids for single-machine runs; every value also appears in the full grid.
DESK_GRIDS = {
    "logreg": {"C": [0.1, 1]},
    "rf": {"n_estimators": [50], "max_depth": [5, 10], "min_samples_split": [10],
           "min_samples_leaf": [4]},
    "xgb_role": {"n_estimators": [100], "max_depth": [3], "learning_rate": [0.1],
                 "subsample": [0.8]},
    "lgbm_role": {"n_estimators": [100], "max_depth": [3], "learning_rate": [0.1]},
    "mlp": {"hidden_layer_sizes": [(50,)], "alpha": [0.001], "learning_rate": ["adaptive"]},
    "nb": {},
}


class LeakageError(AssertionError):
    pass


def slot_balancer(role, slot):
    """The 7th slot is class weighting for logreg/rf and no resampling otherwise."""
    if slot == "baseline":
        return "class_weight" if role in WEIGHTED_ROLES else "none"
    return slot


def balancer_slot(kind):
    return "baseline" if kind in ("none", "class_weight", "baseline") else kind


@dataclass
class SweepConfig:
    seed: int = 0
    folds: int = 5
    split: tuple = (0.60, 0.20, 0.20)
    threshold_mode: str = "max_mcc"
    grid: str = "full"
    models: tuple = ROLES
    routes: tuple = ROUTES
    balancers: tuple = BALANCER_SLOTS
    k_neighbors: int = 5
    missing_threshold: float = 0.70
    mice_max_iter: int = 10
    mice_tol: float = 1e-3
    mice_ridge: float = 1e-3
    rfe_trees: int = 50
    rfe_max_depth: int | None = None
    rfecv_trees: int = 50
    rfecv_max_depth: int = 3
    rfecv_learning_rate: float = 0.1
    rfecv_folds: int = 5
    mlp_max_epochs: int = 200
    n_boot: int = 2000
    ci_level: float = 0.95
    jobs: int = 1

    def __post_init__(self):
        if self.threshold_mode not in ("max_mcc", "fixed_0.5"):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.grid not in ("full", "desk"):
            raise ValueError(f"unknown grid preset {self.grid!r}")
        for name, allowed, given in (("models", ROLES, self.models),
                                     ("routes", ROUTES, self.routes),
                                     ("balancers", BALANCER_SLOTS, self.balancers)):
            bad = [g for g in given if g not in allowed]
            if bad:
                raise ValueError(f"unknown {name}: {bad}")

    def grids(self):
        return PARAM_GRIDS if self.grid == "full" else DESK_GRIDS


@dataclass(frozen=True)
class PipelineSpec:
    model_role: str
    feature_route: str
    balancer: str
    index: int
    seed: int
    hyperparams: tuple = ()

    @property
    def pipeline_id(self):
        return f"{self.model_role}__{self.feature_route}__{self.balancer}"

    @property
    def params(self):
        return dict(self.hyperparams)

    def with_params(self, params):
        return PipelineSpec(self.model_role, self.feature_route, self.balancer, self.index,
                            self.seed, tuple(params.items()))


def enumerate_cells(config):
    """Cells in canonical order. ``index`` is the position in the full 126-cell
    grid, so a cell's seed does not depend on which other cells are run."""
    cells = []
    for i, (role, route, slot) in enumerate(itertools.product(ROLES, ROUTES, BALANCER_SLOTS)):
        if role in config.models and route in config.routes and slot in config.balancers:
            cells.append(PipelineSpec(role, route, slot_balancer(role, slot), i,
                                      derive_seed(config.seed, 1000 + i)))
    return cells


def grid_combinations(grid):
    """Every assignment of the grid, in listed order (an empty grid gives one)."""
    keys = list(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


# -- leakage audit -----------------------------------------------------------------

class LeakageAudit:
    def __init__(self):
        self.events = []
        self.test_rows_in_fit = 0

    def record(self, stage, key, partitions, allowed):
        parts = set(partitions)
        if "test" in parts:
            self.test_rows_in_fit += 1
        self.events.append((stage, key, tuple(sorted(parts))))
        if not parts <= set(allowed):
            raise LeakageError(f"{stage} for {key} consumed {sorted(parts)}; "
                               f"allowed {sorted(allowed)}")

    def consumed(self):
        out = {}
        for stage, _, parts in self.events:
            out.setdefault(stage, set()).update(parts)
        return {k: sorted(v) for k, v in sorted(out.items())}


# -- workspace -----------------------------------------------------------------------

def cohort_matrix(visits):
    features = list(DEMOGRAPHIC_FEATURES) + [f for f in LAB_FEATURES if f in visits.columns]
    return matrix_from_visits(visits, features)


class Workspace:
    """Split, folds and cached fit stages for one benchmark run.

    Stage keys: ``cv{i}`` (training folds), ``train``, ``tv`` (train+val) and
    ``tvcv{i}`` (folds over train+val, used only to pick the final threshold).
    """

    def __init__(self, matrix, config):
        self.config = config
        seed = config.seed
        groups = matrix.subject_ids
        tr, va, te = group_shuffle_split(groups, SplitSpec(tuple(config.split),
                                                           derive_seed(seed, 1)))
        tags = np.empty(matrix.n_rows, dtype=object)
        tags[tr], tags[va], tags[te] = "train", "val", "test"
        self.matrix = type(matrix)(matrix.values, matrix.columns, matrix.subject_ids,
                                   matrix.labels, tags)
        self.train_idx, self.val_idx, self.test_idx = tr, va, te
        self.tv_idx = np.sort(np.r_[tr, va])
        self.stages = {"train": (tr, ("train",)), "tv": (self.tv_idx, ("train", "val"))}
        self.score_rows = {"train": va, "tv": te}
        for i, (f, s) in enumerate(grouped_kfold(groups[tr], config.folds, derive_seed(seed, 2))):
            self.stages[f"cv{i}"] = (tr[f], ("train",))
            self.score_rows[f"cv{i}"] = tr[s]
        self.tv_folds = grouped_kfold(groups[self.tv_idx], config.folds, derive_seed(seed, 3))
        for i, (f, s) in enumerate(self.tv_folds):
            self.stages[f"tvcv{i}"] = (self.tv_idx[f], ("train", "val"))
            self.score_rows[f"tvcv{i}"] = self.tv_idx[s]
        self.stage_order = {k: i for i, k in enumerate(sorted(self.stages))}
        self.audit = LeakageAudit()
        self._prep, self._scored, self._k, self._sel, self._bal = {}, {}, {}, {}, {}

    def fold_keys(self):
        return [f"cv{i}" for i in range(self.config.folds)]

    def labels(self, rows):
        return self.matrix.labels[rows]

    def _check(self, stage, key, rows):
        _, allowed = self.stages[key]
        self.audit.record(stage, key, self.matrix.partition[rows], allowed)

    def prepared(self, key):
        if key not in self._prep:
            rows, _ = self.stages[key]
            self._check("preprocess", key, rows)
            c = self.config
            state, out = fit_preprocess(self.matrix.rows(rows), seed=derive_seed(c.seed, 4),
                                        missing_threshold=c.missing_threshold,
                                        max_iter=c.mice_max_iter, tol=c.mice_tol,
                                        ridge=c.mice_ridge)
            self._prep[key] = (state, out)
        return self._prep[key]

    def transformed(self, key, rows):
        """Preprocessed rows under ``key``'s fitted state (apply only)."""
        fit_rows, _ = self.stages[key]
        state, out = self.prepared(key)
        if rows is fit_rows:
            return out
        cache_key = (key, rows.tobytes())
        if cache_key not in self._scored:
            self._scored[cache_key] = apply_preprocess(state, self.matrix.rows(rows))
        return self._scored[cache_key]

    def family(self, key):
        return "tv" if key.startswith("tv") else "train"

    def feature_count(self, family):
        """Feature count for automated routes, chosen by grouped CV on the
        family's full fit set."""
        if family not in self._k:
            rows, _ = self.stages[family]
            self._check("select_k", family, rows)
            _, m = self.prepared(family)
            c = self.config
            self._k[family] = rfecv_choose_k(
                m.values, m.labels, m.subject_ids, folds=c.rfecv_folds,
                seed=derive_seed(c.seed, 5), n_estimators=c.rfecv_trees,
                max_depth=c.rfecv_max_depth, learning_rate=c.rfecv_learning_rate)
        return self._k[family]

    def selection(self, key, route):
        if (key, route) not in self._sel:
            rows, _ = self.stages[key]
            self._check("select", key, rows)
            _, m = self.prepared(key)
            if route == "manual":
                panel = manual_panel()
                avail = [f for f in panel.selected if f in m.columns]
                if not avail:
                    raise ValueError("no manual-panel feature survived preprocessing")
                missing = [f for f in panel.selected if f not in m.columns]
                spec = FeatureSetSpec("manual", None, tuple(avail),
                                      {"unavailable": missing} if missing else {})
            else:
                k = min(self.feature_count(self.family(key)), len(m.columns))
                c = self.config
                if route == "univariate":
                    spec = univariate_top_k(m.values, m.labels, k, m.columns)
                else:
                    spec = rfe(m.values, m.labels, k, m.columns,
                               seed=derive_seed(c.seed, 6, self.stage_order[key]),
                               n_estimators=c.rfe_trees, max_depth=c.rfe_max_depth)
            self._sel[(key, route)] = spec
        return self._sel[(key, route)]

    def balanced(self, key, route, kind):
        ck = (key, route, kind)
        if ck not in self._bal:
            rows, _ = self.stages[key]
            self._check("balance", key, rows)
            _, m = self.prepared(key)
            X = m.select(self.selection(key, route).selected).values
            spec = BalancerSpec(kind, self.config.k_neighbors, derive_seed(
                self.config.seed, 7, self.stage_order[key], ROUTES.index(route),
                BALANCERS.index(kind)))
            self._bal[ck] = balance(spec, X, m.labels)
        return self._bal[ck]

    def clear_balance_cache(self):
        self._bal.clear()

    def fit(self, cell, params, key):
        rows, _ = self.stages[key]
        self._check("fit", key, rows)
        X, y, w = self.balanced(key, cell.feature_route, cell.balancer)
        spec = ClassifierSpec(ROLE_FAMILY[cell.model_role], dict(params), cell.seed,
                              cell.model_role)
        extra = {"max_epochs": self.config.mlp_max_epochs} if spec.family == "mlp" else {}
        return fit_model(spec, X, y, w, **extra)

    def predict(self, model, key, route, rows):
        m = self.transformed(key, rows)
        return model.predict_proba(m.select(self.selection(key, route).selected).values)


# -- grid search and benchmark -----------------------------------------------------------

def _fold_mcc(scores, labels, mode):
    if len(np.unique(labels)) < 2:
        logger.warning("score side of a fold has one class; fold MCC set to 0")
        return 0.0
    if mode == "max_mcc":
        return select_threshold(scores, labels).mcc
    return mcc(confusion_at(scores, labels, 0.5))


@dataclass
class GridResult:
    best_params: dict
    best_mcc: float
    fold_mcc: list
    oof_scores: np.ndarray
    evaluated: list = field(default_factory=list)


def grid_search(ws, cell, grid, keys=None):
    """Mean fold MCC for every combination; the first maximum wins."""
    keys = keys or ws.fold_keys()
    best = None
    evaluated = []
    for params in grid_combinations(grid):
        fold_scores = []
        oof = {}
        for key in keys:
            model = ws.fit(cell, params, key)
            rows = ws.score_rows[key]
            s = ws.predict(model, key, cell.feature_route, rows)
            fold_scores.append(_fold_mcc(s, ws.labels(rows), ws.config.threshold_mode))
            oof[key] = s
        mean = float(np.mean(fold_scores))
        evaluated.append({"params": _jsonable(params), "fold_mcc": fold_scores, "mean_mcc": mean})
        if best is None or mean > best.best_mcc:
            best = GridResult(params, mean, fold_scores, oof)
    best.evaluated = evaluated
    return best


def _oof_vector(ws, oof, keys):
    rows = np.concatenate([ws.score_rows[k] for k in keys])
    scores = np.concatenate([oof[k] for k in keys])
    order = np.argsort(rows, kind="stable")
    return rows[order], scores[order]


def choose_threshold(scores, labels, mode):
    if mode == "fixed_0.5":
        return 0.5
    return select_threshold(scores, labels).threshold


@dataclass
class LeaderboardRow:
    pipeline_id: str
    cell_index: int
    model_role: str
    feature_route: str
    balancer: str
    hyperparams: dict
    cv_mcc: float | None
    val_mcc: float | None
    val_auc: float | None
    threshold: float | None
    status: str = "ok"
    error: str | None = None
    n_combinations: int = 0
    selected_features: list = field(default_factory=list)
    evaluated: list = field(default_factory=list)

    def table_row(self):
        return {
            "Base Model": ROLE_DISPLAY[self.model_role],
            "Data Balancer": BALANCER_DISPLAY[self.balancer],
            "Feature Set": ROUTE_DISPLAY[self.feature_route],
            "MCC": self.val_mcc,
            "AUC": self.val_auc,
        }

    def to_dict(self):
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, d):
        fields_ = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        fields_["hyperparams"] = _params_from_json(fields_.get("hyperparams", {}))
        return cls(**fields_)


def _params_from_json(d):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(round(float(obj), 12))
    return obj


def evaluate_cell(ws, cell):
    grid = ws.config.grids()[cell.model_role]
    try:
        gs = grid_search(ws, cell, grid)
        rows, oof = _oof_vector(ws, gs.oof_scores, ws.fold_keys())
        thr = choose_threshold(oof, ws.labels(rows), ws.config.threshold_mode)
        model = ws.fit(cell, gs.best_params, "train")
        val = ws.val_idx
        s = ws.predict(model, "train", cell.feature_route, val)
        yv = ws.labels(val)
        val_mcc = mcc(confusion_at(s, yv, thr))
        val_auc = roc_auc(s, yv) if len(np.unique(yv)) == 2 else None
        return LeaderboardRow(
            cell.pipeline_id, cell.index, cell.model_role, cell.feature_route, cell.balancer,
            dict(gs.best_params), gs.best_mcc, val_mcc, val_auc, thr,
            n_combinations=len(gs.evaluated),
            selected_features=list(ws.selection("train", cell.feature_route).selected),
            evaluated=gs.evaluated)
    except LeakageError:
        raise
    except Exception as exc:  # recorded; the sweep carries on
        logger.warning("cell %s failed: %s", cell.pipeline_id, exc)
        return LeaderboardRow(cell.pipeline_id, cell.index, cell.model_role, cell.feature_route,
                              cell.balancer, {}, None, None, None, None, status="failed",
                              error=f"{type(exc).__name__}: {exc}")


def _group_cells(cells):
    """Cells sharing a (route, balancer) reuse the same balanced folds."""
    groups = {}
    for c in cells:
        groups.setdefault((c.feature_route, c.balancer), []).append(c)
    return [groups[k] for k in sorted(groups, key=lambda k: min(c.index for c in groups[k]))]


_WORKER_WS = None


def _worker_init(matrix, config):
    global _WORKER_WS
    _WORKER_WS = Workspace(matrix, config)


def _run_group(cells):
    ws = _WORKER_WS
    out = [evaluate_cell(ws, c) for c in cells]
    ws.clear_balance_cache()
    return out


def sort_leaderboard(rows):
    ok = sorted((r for r in rows if r.status == "ok"), key=lambda r: (-r.val_mcc, r.cell_index))
    failed = sorted((r for r in rows if r.status != "ok"), key=lambda r: r.cell_index)
    return ok + failed


def run_benchmark(matrix, config, ws=None, progress=None):
    """Evaluate every configured cell; returns the sorted leaderboard."""
    cells = enumerate_cells(config)
    groups = _group_cells(cells)
    rows = []
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs, initializer=_worker_init,
                                 initargs=(matrix, config)) as pool:
            for batch in pool.map(_run_group, groups):
                rows.extend(batch)
                if progress:
                    progress(len(rows), len(cells))
    else:
        ws = ws or Workspace(matrix, config)
        for g in groups:
            for c in g:
                rows.append(evaluate_cell(ws, c))
                if progress:
                    progress(len(rows), len(cells))
            ws.clear_balance_cache()
    return sort_leaderboard(rows)


# -- final protocol -------------------------------------------------------------------------

@dataclass
class FinalArtifacts:
    model: object
    selection: FeatureSetSpec
    X_test: np.ndarray
    y_test: np.ndarray
    X_fit: np.ndarray
    test_scores: np.ndarray
    threshold: float


def cell_from_row(row, config):
    index = row.cell_index
    return PipelineSpec(row.model_role, row.feature_route, row.balancer, index,
                        derive_seed(config.seed, 1000 + index), tuple(row.hyperparams.items()))


def final_evaluate(ws, cell):
    """Refit on train+val, pick the threshold from train+val out-of-fold scores
    (or 0.5), and score the test partition exactly once."""
    params = cell.params
    keys = [f"tvcv{i}" for i in range(ws.config.folds)]
    mode = ws.config.threshold_mode
    if mode == "max_mcc":
        oof = {k: ws.predict(ws.fit(cell, params, k), k, cell.feature_route, ws.score_rows[k])
               for k in keys}
        rows, scores = _oof_vector(ws, oof, keys)
        thr = choose_threshold(scores, ws.labels(rows), mode)
        source = "train+val out-of-fold max-MCC"
    else:
        thr, source = 0.5, "fixed 0.5"
    model = ws.fit(cell, params, "tv")
    test = ws.test_idx
    s = ws.predict(model, "tv", cell.feature_route, test)
    y = ws.labels(test)
    report = evaluate_scores(s, y, thr, n_boot=ws.config.n_boot, level=ws.config.ci_level,
                             seed=derive_seed(ws.config.seed, 8), threshold_mode=mode)
    sel = ws.selection("tv", cell.feature_route)
    report.extra.update({
        "pipeline_id": cell.pipeline_id,
        "model": ROLE_DISPLAY[cell.model_role],
        "balancer": BALANCER_DISPLAY[cell.balancer],
        "feature_set": ROUTE_DISPLAY[cell.feature_route],
        "hyperparams": _jsonable(params),
        "selected_features": list(sel.selected),
        "threshold_source": source,
        "n_test_visits": int(len(test)),
        "n_test_subjects": int(len(np.unique(ws.matrix.subject_ids[test]))),
        "fit_partitions": ws.audit.consumed(),
        "test_rows_in_fit": ws.audit.test_rows_in_fit,
        "kernel_backend": model.meta.get("kernel_backend"),
    })
    _, m_fit = ws.prepared("tv")
    artifacts = FinalArtifacts(model, sel, ws.transformed("tv", test).select(sel.selected).values,
                               y, m_fit.select(sel.selected).values, s, thr)
    return report, artifacts


# -- output -------------------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def write_leaderboard(rows, directory, top=10):
    os.makedirs(directory, exist_ok=True)
    cols = ["Rank", "Base Model", "Data Balancer", "Feature Set", "MCC", "AUC", "pipeline_id",
            "status", "cv_mcc", "threshold", "hyperparams", "error"]

    def write(path, subset):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for rank, r in enumerate(subset, 1):
                t = r.table_row()
                w.writerow([rank, t["Base Model"], t["Data Balancer"], t["Feature Set"],
                            _fmt(t["MCC"]), _fmt(t["AUC"]), r.pipeline_id, r.status,
                            _fmt(r.cv_mcc), _fmt(r.threshold),
                            json.dumps(_jsonable(r.hyperparams), sort_keys=True),
                            r.error or ""])

    write(os.path.join(directory, "leaderboard.csv"), rows)
    write(os.path.join(directory, "top10.csv"), [r for r in rows if r.status == "ok"][:top])
    with open(os.path.join(directory, "leaderboard.json"), "w") as fh:
        json.dump([r.to_dict() for r in rows], fh, indent=2, sort_keys=True)
        fh.write("\n")
    cell_dir = os.path.join(directory, "cells")
    os.makedirs(cell_dir, exist_ok=True)
    for r in rows:
        with open(os.path.join(cell_dir, f"{r.pipeline_id}.json"), "w") as fh:
            json.dump(r.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_leaderboard(directory):
    with open(os.path.join(directory, "leaderboard.json")) as fh:
        return [LeaderboardRow.from_dict(d) for d in json.load(fh)]

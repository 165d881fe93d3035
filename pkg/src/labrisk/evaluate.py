"""Threshold metrics, ROC / precision-recall curves and bootstrap intervals.

A row is predicted positive when ``score >= threshold``. Rate metrics with a
zero denominator are reported as 0 and listed in ``degenerate``.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

TABLE_METRICS = ("mcc", "auc", "ppv", "npv", "recall", "specificity", "accuracy")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")
        if self.n == 0:
            raise ValueError("empty confusion matrix")

    @property
    def n(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class CurvePoints:
    thresholds: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    area: float
    baseline: float | None = None

    def to_rows(self):
        return list(zip(self.thresholds.tolist(), self.xs.tolist(), self.ys.tolist()))


@dataclass
class Rates:
    ppv: float
    npv: float
    recall: float
    specificity: float
    accuracy: float
    f1: float
    degenerate: tuple = ()


@dataclass
class EvaluationReport:
    mcc: float
    auc: float
    auc_ci_low: float
    auc_ci_high: float
    ppv: float
    npv: float
    recall: float
    specificity: float
    accuracy: float
    f1: float
    threshold: float
    prevalence: float
    roc: CurvePoints
    pr: CurvePoints
    counts: ConfusionCounts
    threshold_mode: str = "max_mcc"
    degenerate: tuple = ()
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "mcc", "auc", "auc_ci_low", "auc_ci_high", "ppv", "npv", "recall",
            "specificity", "accuracy", "f1", "threshold", "prevalence", "threshold_mode")}
        d["counts"] = asdict(self.counts)
        d["degenerate"] = list(self.degenerate)
        d["roc_auc"] = self.roc.area
        d["average_precision"] = self.pr.area
        d["pr_baseline"] = self.pr.baseline
        d.update(self.extra)
        return d

    def to_json(self):
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(round(float(obj), 12))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _as_arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return s, y


def confusion_at(scores, labels, threshold):
    s, y = _as_arrays(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return ConfusionCounts(tp, fp, tn, fn)


def mcc(c):
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def basic_rates(c):
    flags = []
    ppv = _ratio(c.tp, c.tp + c.fp, "ppv", flags)
    npv = _ratio(c.tn, c.tn + c.fn, "npv", flags)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", flags)
    specificity = _ratio(c.tn, c.tn + c.fp, "specificity", flags)
    accuracy = (c.tp + c.tn) / c.n
    f1 = _ratio(2 * ppv * recall, ppv + recall, "f1", flags)
    return Rates(ppv, npv, recall, specificity, accuracy, f1, tuple(flags))


def _sweep_counts(s, y):
    """Cumulative (tp, fp) after each group of tied scores, highest first."""
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s_sorted) - 1]
    tps = np.cumsum(y_sorted)[last_of_group]
    fps = (last_of_group + 1) - tps
    return s_sorted[last_of_group], tps.astype(np.float64), fps.astype(np.float64)


def roc_curve(scores, labels):
    s, y = _as_arrays(scores, labels)
    n_pos, n_neg = int(y.sum()), int(len(y) - y.sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes")
    thr, tps, fps = _sweep_counts(s, y)
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return CurvePoints(np.r_[np.inf, thr], fpr, tpr, area)


def roc_auc(scores, labels):
    return roc_curve(scores, labels).area


def pr_curve(scores, labels):
    """Recall/precision per cut-point; area is average precision.

    The first point is (recall 0, precision 1) at an infinite threshold and is
    not part of the average-precision sum.
    """
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("precision-recall needs at least one positive")
    thr, tps, fps = _sweep_counts(s, y)
    precision = tps / (tps + fps)
    recall = tps / n_pos
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return CurvePoints(np.r_[np.inf, thr], np.r_[0.0, recall], np.r_[1.0, precision], ap,
                       baseline=n_pos / len(y))


def average_precision(scores, labels):
    return pr_curve(scores, labels).area


def _draw_with_both_classes(y, rng, groups=None, max_attempts=10):
    n = len(y)
    for _ in range(max_attempts):
        if groups is None:
            idx = rng.integers(0, n, n)
        else:
            uniq, inverse = np.unique(groups, return_inverse=True)
            members = [np.flatnonzero(inverse == k) for k in range(len(uniq))]
            pick = rng.integers(0, len(uniq), len(uniq))
            idx = np.concatenate([members[k] for k in pick])
        yb = y[idx]
        if 0 < yb.sum() < len(yb):
            return idx
    return None


def bootstrap_auc_ci(scores, labels, n_boot=2000, level=0.95, seed=0, groups=None):
    """Percentile bootstrap interval for ROC AUC.

    Resamples visits by default; pass ``groups`` (e.g. subject ids) to resample
    whole subjects. Iteration ``b`` draws from ``default_rng([seed, b])``, so
    results do not depend on how iterations are scheduled. A resample lacking
    a class is redrawn up to 10 times and then skipped.
    """
    s, y = _as_arrays(scores, labels)
    if groups is not None:
        groups = np.asarray(groups)
    aucs = []
    skipped = 0
    for b in range(int(n_boot)):
        rng = np.random.default_rng([int(seed), b])
        idx = _draw_with_both_classes(y, rng, groups)
        if idx is None:
            skipped += 1
            continue
        aucs.append(roc_auc(s[idx], y[idx]))
    if skipped:
        logger.warning("bootstrap skipped %d single-class resamples", skipped)
    if not aucs:
        raise ValueError("no usable bootstrap resamples")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(aucs, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


class ThresholdChoice(NamedTuple):
    threshold: float
    mcc: float
    degenerate: bool


def mcc_by_cutpoint(scores, labels):
    """(cut-points descending, MCC at each) for ``score >= cut`` rules."""
    s, y = _as_arrays(scores, labels)
    thr, tps, fps = _sweep_counts(s, y)
    n_pos = float(y.sum())
    n_neg = float(len(y) - n_pos)
    fns = n_pos - tps
    tns = n_neg - fps
    denom = (tps + fps) * (tps + fns) * (tns + fps) * (tns + fns)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(denom > 0, (tps * tns - fps * fns) / np.sqrt(denom), 0.0)
    return thr, vals


def select_threshold(scores, labels, objective="max_mcc"):
    """Decision threshold for ``score >= threshold``.

    ``max_mcc`` scans every distinct score as a cut-point and returns the
    midpoint of the gap below the best one (the best cut itself when it is
    the lowest score). ``fixed_0.5`` returns 0.5.
    """
    s, y = _as_arrays(scores, labels)
    if objective in ("fixed_0.5", "fixed"):
        return ThresholdChoice(0.5, mcc(confusion_at(s, y, 0.5)), False)
    if objective != "max_mcc":
        raise ValueError(f"unknown threshold objective {objective!r}")
    thr, vals = mcc_by_cutpoint(s, y)
    if len(thr) == 1:
        logger.warning("constant scores: threshold is degenerate")
        return ThresholdChoice(float(thr[0]), float(vals[0]), True)
    k = int(np.argmax(vals))
    cut = float(thr[k])
    if k < len(thr) - 1:
        mid = float((thr[k] + thr[k + 1]) / 2.0)
        if thr[k + 1] < mid <= thr[k]:  # adjacent floats have no midpoint
            cut = mid
    return ThresholdChoice(cut, float(vals[k]), False)


def max_mcc(scores, labels):
    return float(np.max(mcc_by_cutpoint(scores, labels)[1]))


def evaluate_scores(scores, labels, threshold, *, n_boot=2000, level=0.95, seed=0,
                    groups=None, threshold_mode="max_mcc"):
    s, y = _as_arrays(scores, labels)
    counts = confusion_at(s, y, threshold)
    rates = basic_rates(counts)
    roc = roc_curve(s, y)
    pr = pr_curve(s, y)
    lo, hi = bootstrap_auc_ci(s, y, n_boot=n_boot, level=level, seed=seed, groups=groups)
    return EvaluationReport(
        mcc=mcc(counts), auc=roc.area, auc_ci_low=lo, auc_ci_high=hi,
        ppv=rates.ppv, npv=rates.npv, recall=rates.recall, specificity=rates.specificity,
        accuracy=rates.accuracy, f1=rates.f1, threshold=float(threshold),
        prevalence=float(y.mean()), roc=roc, pr=pr, counts=counts,
        threshold_mode=threshold_mode, degenerate=rates.degenerate,
    )


def write_curve_csv(curve, path, x_name, y_name):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", x_name, y_name])
        for t, x, yv in curve.to_rows():
            writer.writerow([repr(float(t)), repr(float(x)), repr(float(yv))])

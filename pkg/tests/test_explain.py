import itertools
from math import factorial

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labrisk.explain import (ExplainError, ShapExplanation, background_sample, beeswarm_export,
                             explain_model, global_importance, linear_shap, sampling_shap,
                             write_attributions_csv, write_beeswarm_csv, write_global_csv)
from labrisk.models import fit_gbdt, fit_logreg
from labrisk.models.logreg import LogisticModel


def exact_shapley(f, x, bg):
    """Interventional Shapley values by enumerating every coalition."""
    m = len(x)

    def v(S):
        Z = bg.copy()
        Z[:, list(S)] = x[list(S)]
        return f(Z).mean()

    phi = np.zeros(m)
    for j in range(m):
        others = [k for k in range(m) if k != j]
        for r in range(m):
            for S in itertools.combinations(others, r):
                w = factorial(r) * factorial(m - r - 1) / factorial(m)
                phi[j] += w * (v(S + (j,)) - v(S))
    return phi


@pytest.fixture(scope="module")
def fitted():
    r = np.random.default_rng(4)
    X = r.normal(size=(600, 4))
    y = (X[:, 0] - 0.5 * X[:, 2] + r.normal(0, 0.7, 600) > 0).astype(int)
    return X, y, fit_logreg(X, y), fit_gbdt(X, y, n_estimators=30, max_depth=3, seed=1)


# -- linear ------------------------------------------------------------------------------------

def test_linear_hand_values():
    model = LogisticModel([2.0, 0.0], 0.5)
    bg = np.array([[0.0, 0.0], [2.0, 2.0]])
    e = linear_shap(model, np.array([[3.0, 5.0], [1.0, 1.0]]), bg)
    assert e.values.tolist() == [[4.0, 0.0], [0.0, 0.0]]
    assert e.base_value == 2.5
    assert e.local_accuracy_error().max() == 0.0


def test_linear_local_accuracy_on_fitted_model(fitted):
    X, _, lr, _ = fitted
    e = linear_shap(lr, X[:50], background_sample(X, 100, seed=2))
    assert e.local_accuracy_error().max() < 1e-12


def test_linear_matches_coalition_enumeration(fitted):
    X, _, lr, _ = fitted
    bg = X[:30]
    e = linear_shap(lr, X[100:103], bg)
    for i in range(3):
        assert np.allclose(e.values[i], exact_shapley(lr.decision_function, X[100 + i], bg),
                           atol=1e-12)


# -- sampling -----------------------------------------------------------------------------------

def test_sampling_exact_for_additive_function():
    r = np.random.default_rng(0)
    bg, X = r.normal(size=(20, 3)), r.normal(size=(5, 3))

    def f(Z):
        return np.sin(Z[:, 0]) + Z[:, 1] ** 2 - 3 * Z[:, 2]

    e = sampling_shap(None, X, bg, n_permutations=4, margin_fn=f)
    expect = np.column_stack([np.sin(X[:, 0]) - np.sin(bg[:, 0]).mean(),
                              X[:, 1] ** 2 - (bg[:, 1] ** 2).mean(),
                              -3 * (X[:, 2] - bg[:, 2].mean())])
    assert np.allclose(e.values, expect, atol=1e-12)


def test_sampling_converges_to_exact_with_interactions():
    r = np.random.default_rng(1)
    bg, X = r.normal(size=(15, 4)), r.normal(size=(3, 4))

    def f(Z):
        return Z[:, 0] * Z[:, 1] + np.maximum(Z[:, 2], Z[:, 3])

    e = sampling_shap(None, X, bg, n_permutations=400, seed=3, margin_fn=f)
    for i in range(3):
        exact = exact_shapley(f, X[i], bg)
        assert np.abs(e.values[i] - exact).max() < 0.05 * (np.abs(exact).max() + 1)
    assert e.local_accuracy_error().max() < 1e-12


def test_dummy_feature_gets_zero(fitted):
    X, _, _, gb = fitted
    Xd = np.column_stack([X[:, :2], np.zeros(len(X))])

    def f(Z):
        return gb.margin(np.column_stack([Z[:, :2], np.zeros((len(Z), 2))]))

    e = sampling_shap(None, Xd[:5], Xd[:40], n_permutations=20, margin_fn=f)
    assert np.abs(e.values[:, 2]).max() == 0.0


def test_symmetric_features_share_credit():
    bg = np.zeros((1, 2))
    e = sampling_shap(None, np.array([[1.0, 1.0]]), bg, n_permutations=2,
                      margin_fn=lambda Z: Z[:, 0] * Z[:, 1])
    assert e.values[0].tolist() == [0.5, 0.5]


def test_sampling_deterministic_and_validates(fitted):
    X, _, _, gb = fitted
    a = sampling_shap(gb, X[:4], X[:30], n_permutations=10, seed=5)
    b = sampling_shap(gb, X[:4], X[:30], n_permutations=10, seed=5)
    assert np.array_equal(a.values, b.values)
    assert a.meta["n_permutations"] == 10
    assert sampling_shap(gb, X[:1], X[:30], n_permutations=3).meta["n_permutations"] == 4
    with pytest.raises(ExplainError):
        sampling_shap(gb, X[:2], X[:30], n_permutations=1)


def test_sampling_on_gbdt_local_accuracy(fitted):
    X, _, _, gb = fitted
    e = explain_model(gb, X[:10], background_sample(X, 50, seed=1), n_permutations=20)
    assert e.method == "sampling"
    assert e.local_accuracy_error().max() < 1e-9
    assert np.allclose(e.margins, gb.margin(X[:10]))


def test_sampling_agrees_with_linear_on_logreg(fitted):
    X, _, lr, _ = fitted
    bg = background_sample(X, 60, seed=0)
    lin = explain_model(lr, X[:5], bg)
    smp = sampling_shap(None, X[:5], bg, n_permutations=6, margin_fn=lr.decision_function)
    assert lin.method == "linear"
    assert np.abs(lin.values - smp.values).max() < 0.01


# -- global importance and export ----------------------------------------------------------------

def _expl(values, features=("a", "b", "c")):
    values = np.asarray(values, dtype=float)
    return ShapExplanation(0.0, values, features, values.sum(axis=1), "linear")


def test_global_importance_dominance_and_ties():
    e = _expl([[5.0, -1.0, 1.0], [-5.0, 1.0, -1.0]], ("z", "b", "a"))
    assert global_importance(e) == [("z", 5.0), ("a", 1.0), ("b", 1.0)]
    assert e.ranking == ["z", "a", "b"]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_global_importance_recomputes_from_values(seed):
    v = np.random.default_rng(seed).normal(size=(7, 3))
    imp = dict(global_importance(_expl(v)))
    for j, f in enumerate("abc"):
        assert imp[f] == pytest.approx(sum(abs(x) for x in v[:, j]) / 7, rel=1e-12)


def test_beeswarm_shape_and_order(rng):
    v, X = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    e = _expl(v)
    df = beeswarm_export(e, X)
    assert len(df) == 12
    for _, rec in df.iterrows():
        j = "abc".index(rec["feature"])
        assert rec["attribution"] == v[rec["row"], j] and rec["value"] == X[rec["row"], j]
    with pytest.raises(ExplainError):
        beeswarm_export(e, X[:2])


def test_csv_writers_round_trip(rng, tmp_path):
    v, X = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    e = _expl(v)
    write_global_csv(e, tmp_path / "g.csv")
    write_attributions_csv(e, tmp_path / "a.csv")
    write_beeswarm_csv(e, X, tmp_path / "b.csv")
    g = pd.read_csv(tmp_path / "g.csv")
    assert g["feature"].tolist() == e.ranking and g["rank"].tolist() == [1, 2, 3]
    a = pd.read_csv(tmp_path / "a.csv")
    assert np.allclose(a[["a", "b", "c"]].to_numpy(), v, rtol=1e-15)
    assert np.allclose(a["margin"], v.sum(axis=1))
    b = pd.read_csv(tmp_path / "b.csv")
    assert np.allclose(b["attribution"], v.ravel(), rtol=1e-15)


def test_background_sample():
    X = np.arange(500, dtype=float).reshape(250, 2)
    s = background_sample(X, 100, seed=3)
    assert s.shape == (100, 2) and np.all(np.diff(s[:, 0]) > 0)
    assert np.array_equal(s, background_sample(X, 100, seed=3))
    assert background_sample(X[:10], 100).shape == (10, 2)


def test_age_ranks_first_when_age_is_the_only_signal():
    from labrisk.cohort import SynthConfig, synthesize_cohort
    from labrisk.feature_select import manual_panel
    from labrisk.preprocess import fit_preprocess
    from labrisk.resample import class_weights
    from labrisk.sweep import cohort_matrix

    cohort = synthesize_cohort(SynthConfig(n_subjects=800, target_visits=5900, signal_effects={},
                                           seed=2))
    _, m = fit_preprocess(cohort_matrix(cohort.visits), max_iter=2)
    m = m.select([f for f in manual_panel().selected if f in m.columns])
    cw = class_weights(m.labels)
    model = fit_logreg(m.values, m.labels, np.vectorize(cw.get)(m.labels))
    e = linear_shap(model, m.values[:300], background_sample(m.values, 100, seed=0),
                    m.columns)
    assert e.ranking[0] == "age_at_visit"

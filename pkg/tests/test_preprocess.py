import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labrisk.preprocess import (FeatureMatrix, PreprocessError, apply_preprocess,
                                engineer_ratios, filter_missingness, fit_preprocess,
                                mice_apply, mice_fit_transform, robust_scale_apply,
                                robust_scale_fit)


def fm(values, columns=None):
    values = np.asarray(values, dtype=np.float64)
    n, d = values.shape
    columns = tuple(columns or (f"f{j}" for j in range(d)))
    return FeatureMatrix(values, columns, np.array([f"s{i // 3}" for i in range(n)]),
                         np.zeros(n, dtype=np.int64))


# -- missingness filter --------------------------------------------------------------------

def test_filter_keeps_59_percent_missing():
    n = 10000
    X = np.ones((n, 2))
    X[:5905, 0] = np.nan  # 59.05% missing
    out = filter_missingness(fm(X), 0.70)
    assert out.columns == ("f0", "f1")


def test_filter_drops_fully_missing():
    X = np.ones((10, 2))
    X[:, 1] = np.nan
    out = filter_missingness(fm(X), 0.70)
    assert out.columns == ("f0",)
    assert out.dropped == ("f1",)


def test_filter_boundary_is_strict():
    X = np.ones((10, 2))
    X[:7, 1] = np.nan  # exactly 70%
    assert filter_missingness(fm(X), 0.70).columns == ("f0", "f1")


def test_filter_all_dropped_is_fatal():
    with pytest.raises(PreprocessError):
        filter_missingness(fm(np.full((4, 2), np.nan)), 0.7)


def test_filter_matches_column_count_oracle(rng):
    for _ in range(20):
        n, d = 50, 8
        X = rng.normal(size=(n, d))
        X[rng.random((n, d)) < rng.random(d)] = np.nan
        thr = rng.uniform(0.1, 0.9)
        expected = [f"f{j}" for j in range(d) if sum(np.isnan(X[i, j]) for i in range(n)) / n <= thr]
        if not expected:
            continue
        assert list(filter_missingness(fm(X), thr).columns) == expected


# -- ratios ----------------------------------------------------------------------------------

def test_ratio_arithmetic():
    m = fm([[7.0, 2.0, 300.0], [7.0, 0.0, 300.0], [1.0, 2.5, 300.0], [np.nan, 2.0, 10.0]],
           ["neutrophils", "lymphocytes", "platelets"])
    out = engineer_ratios(m)
    nlr, plr = out.column("nlr"), out.column("plr")
    assert nlr[0] == 3.5
    assert np.isnan(nlr[1]) and np.isnan(plr[1])
    assert plr[2] == 120.0
    assert np.isnan(nlr[3]) and plr[3] == 5.0


# -- imputation ------------------------------------------------------------------------------

def test_mice_no_missing_is_identity(rng):
    X = rng.normal(size=(30, 4))
    state, out = mice_fit_transform(fm(X))
    assert np.array_equal(out.values, X)
    assert state.iterations == ()


def test_mice_recovers_exact_linear_relation(rng):
    f1 = rng.normal(0, 10, 1000)
    X = np.column_stack([f1, 2 * f1])
    X[17, 1] = np.nan
    _, out = mice_fit_transform(fm(X))
    assert abs(out.values[17, 1] - 2 * f1[17]) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mice_preserves_observed_and_replays(seed):
    r = np.random.default_rng(seed)
    n, d = 60, 4
    X = r.normal(size=(n, d)) @ r.normal(size=(d, d))
    X[r.random((n, d)) < 0.2] = np.nan
    X[0] = 1.0  # every column keeps an observed value
    m = fm(X)
    state, out = mice_fit_transform(m, max_iter=5)
    obs = ~np.isnan(X)
    assert np.array_equal(out.values[obs], X[obs])
    assert not np.isnan(out.values).any()
    assert len(state.change_history) <= 5
    assert np.array_equal(mice_apply(state, m).values, out.values)


def test_mice_change_history_mostly_non_increasing():
    # soft check: convergence measure non-increasing after pass 2 on most
    # Gaussian MCAR fixtures
    good = 0
    trials = 30
    for s in range(trials):
        r = np.random.default_rng(s)
        cov = np.full((5, 5), 0.6) + 0.4 * np.eye(5)
        X = r.multivariate_normal(np.zeros(5), cov, size=300)
        X[r.random(X.shape) < 0.15] = np.nan
        state, _ = mice_fit_transform(fm(X), max_iter=10, tol=1e-12)
        h = np.array(state.change_history)
        good += bool(np.all(np.diff(h[1:]) <= 1e-12))
    assert good >= 0.9 * trials


def test_mice_needs_observed_values():
    X = np.ones((5, 3))
    X[:, 2] = np.nan
    with pytest.raises(PreprocessError):
        mice_fit_transform(fm(X))


# -- scaling ---------------------------------------------------------------------------------

def test_robust_scale_hand_values():
    X = np.column_stack([[1.0, 2, 3, 4, 5], [7.0] * 5])
    m = fm(X)
    state = robust_scale_fit(m)
    out = robust_scale_apply(state, m).values
    assert state.center[0] == 3 and state.q1[0] == 2 and state.q3[0] == 4
    assert out[4, 0] == 1.0
    assert np.array_equal(out[:, 1], np.zeros(5))


def test_sex_passes_through_unscaled():
    X = np.column_stack([[0.0, 1, 1, 0, 1], [1.0, 2, 3, 4, 50]])
    m = fm(X, ["sex", "x"])
    out = robust_scale_apply(robust_scale_fit(m), m)
    assert np.array_equal(out.column("sex"), X[:, 0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=40),
       st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_scaling_is_affine(col, a, b):
    col = np.asarray(col)
    m = fm(np.column_stack([col, col]))
    state = robust_scale_fit(m)
    probe = robust_scale_apply(state, fm(np.array([[a, 0.0], [b, 0.0]]))).values[:, 0]
    iqr = state.q3[0] - state.q1[0]
    div = iqr if iqr > 0 else 1.0
    assert probe[0] - probe[1] == pytest.approx((a - b) / div, rel=1e-9, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scaled_training_median_zero_iqr_one(seed):
    X = np.random.default_rng(seed).lognormal(size=(41, 3))
    m = fm(X)
    out = robust_scale_apply(robust_scale_fit(m), m).values
    assert np.allclose(np.percentile(out, 50, axis=0), 0, atol=1e-12)
    q = np.percentile(out, [25, 75], axis=0)
    assert np.allclose(q[1] - q[0], 1, atol=1e-12)


# -- end-to-end state ------------------------------------------------------------------------

def test_fit_apply_reproduces_training_transform(small_cohort):
    from labrisk.sweep import cohort_matrix
    m = cohort_matrix(small_cohort.visits)
    train, other = m.rows(np.arange(0, 1500)), m.rows(np.arange(1500, m.n_rows))
    state, out = fit_preprocess(train, max_iter=3)
    before = state.to_json()
    again = apply_preprocess(state, train)
    assert np.array_equal(again.values, out.values)
    applied = apply_preprocess(state, other)
    assert applied.columns == out.columns
    assert not np.isnan(applied.values).any()
    assert state.to_json() == before  # apply never touches the fitted state
    d = json.loads(before)
    assert set(d) >= {"kept_features", "imputation", "scaling"}
    assert "nlr" in state.kept_features

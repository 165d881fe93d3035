import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import Delaunay

from labrisk.resample import (BalancerSpec, ResampleError, adasyn, balance, class_weights,
                              enn_clean, kneighbors, largest_remainder, random_over,
                              random_under, smote, smote_enn, smote_tomek, tomek_clean)


def imbalanced(rng, n0=100, n1=12, d=2):
    X = np.vstack([rng.normal(0, 1, (n0, d)), rng.normal(1.5, 1, (n1, d))])
    y = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    return X, y


def seg_residual(p, a, b):
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0, 1)
    return np.linalg.norm(p - (a + t * ab))


# -- weights -----------------------------------------------------------------------------

def test_class_weights():
    assert class_weights([0] * 50 + [1] * 50) == {0: 1.0, 1: 1.0}
    w = class_weights([0] * 90 + [1] * 10)
    assert w[0] == pytest.approx(100 / 180) and w[1] == 5.0
    assert w[0] * 90 == pytest.approx(w[1] * 10)


# -- neighbours --------------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_kneighbors_matches_brute_force_with_ties(seed, k):
    r = np.random.default_rng(seed)
    X = r.integers(0, 4, size=(25, 2)).astype(float)  # many exact ties
    got = kneighbors(X, X, k, exclude_self=True)
    for i in range(len(X)):
        cand = sorted((float(np.sum((X[i] - X[j]) ** 2)), j) for j in range(len(X)) if j != i)
        assert list(got[i]) == [j for _, j in cand[:k]]


# -- random samplers -----------------------------------------------------------------------

def test_random_over_balanced_unchanged(rng):
    X = rng.normal(size=(20, 2))
    y = np.r_[np.zeros(10, int), np.ones(10, int)]
    Xo, yo = random_over(X, y, seed=1)
    assert np.array_equal(Xo, X) and np.array_equal(yo, y)


def test_random_over_copies_minority(rng):
    X, y = imbalanced(rng, 100, 5)
    Xo, yo = random_over(X, y, seed=2)
    assert np.bincount(yo).tolist() == [100, 100]
    minority = {tuple(r) for r in X[y == 1]}
    assert all(tuple(r) in minority for r in Xo[len(X):])


def test_random_under_subset_no_duplicates(rng):
    X, y = imbalanced(rng, 80, 9)
    Xu, yu = random_under(X, y, seed=3)
    assert len(yu) == 18
    maj_in = {tuple(r) for r in X[y == 0]}
    maj_out = [tuple(r) for r in Xu[yu == 0]]
    assert set(maj_out) <= maj_in and len(set(maj_out)) == len(maj_out)


# -- SMOTE -----------------------------------------------------------------------------------

def test_smote_two_point_segment():
    X = np.vstack([np.zeros((2, 2)) + [[0, 0], [1, 1]], np.random.default_rng(0).normal(5, 1, (8, 2))])
    y = np.r_[1, 1, np.zeros(8, int)]
    Xs, ys = smote(X, y, k=1, seed=4)
    new = Xs[len(X):]
    assert np.allclose(new[:, 0], new[:, 1])
    assert ((new[:, 0] > 0) & (new[:, 0] < 1)).all()
    assert np.bincount(ys).tolist() == [8, 8]


def test_smote_points_on_neighbor_segments_and_in_hull(rng):
    X, y = imbalanced(rng, 150, 20)
    Xs, ys = smote(X, y, k=5, seed=5)
    Xmin = X[y == 1]
    nn = kneighbors(Xmin, Xmin, 5, exclude_self=True)
    for p in Xs[len(X):]:
        best = min(seg_residual(p, Xmin[i], Xmin[j]) for i in range(len(Xmin)) for j in nn[i])
        assert best < 1e-9
    assert (Delaunay(Xmin).find_simplex(Xs[len(X):], tol=1e-9) >= 0).all()
    assert np.bincount(ys).tolist() == [150, 150]


def test_smote_never_duplicates_an_original(rng):
    X, y = imbalanced(rng, 60, 10)
    Xs, _ = smote(X, y, k=3, seed=6)
    orig = {tuple(r) for r in X}
    assert not any(tuple(r) in orig for r in Xs[len(X):])


def test_smote_k_too_large_is_fatal(rng):
    X, y = imbalanced(rng, 30, 4)
    with pytest.raises(ResampleError, match="k_neighbors"):
        smote(X, y, k=5)


# -- ADASYN ----------------------------------------------------------------------------------

def test_largest_remainder_hand_values():
    assert largest_remainder([0.2, 0.8], 10).tolist() == [2, 8]
    assert largest_remainder([1, 1, 1], 10).tolist() == [4, 3, 3]
    assert largest_remainder([0.0, 0.5], 7).tolist() == [0, 7]


def test_adasyn_allocates_to_borderline_points():
    # minority point 0 sits inside the minority cluster; point 3 among majority rows
    Xmin = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [0.1, 0.1]])
    Xmaj = np.array([[5.1, 5.0], [5.0, 5.1], [4.9, 5.0], [5.0, 4.9], [5.1, 5.1],
                     [20, 20], [21, 20], [20, 21], [21, 21], [22, 22]])
    X = np.vstack([Xmin, Xmaj])
    y = np.r_[np.ones(5, int), np.zeros(10, int)]
    Xa, ya = adasyn(X, y, k=3, seed=7)
    assert np.bincount(ya).tolist() == [10, 10]
    new = Xa[len(X):]
    # only point 3 has majority neighbours, so every synthetic row starts there
    d_to_3 = np.linalg.norm(new - Xmin[3], axis=1)
    assert len(new) == 5
    assert np.all(d_to_3 <= np.linalg.norm(Xmin[3] - Xmin[[0, 1, 2, 4]], axis=1).max() + 1e-12)


def test_adasyn_total_generated(rng):
    X, y = imbalanced(rng, 90, 15)
    Xa, ya = adasyn(X, y, k=5, seed=8)
    assert np.bincount(ya).tolist() == [90, 90]


# -- cleaners --------------------------------------------------------------------------------

def test_separated_clusters_no_removals(rng):
    X = np.vstack([rng.normal(0, 0.1, (10, 2)), rng.normal(10, 0.1, (10, 2))])
    y = np.r_[np.zeros(10, int), np.ones(10, int)]
    assert len(tomek_clean(X, y)[1]) == 20
    assert len(enn_clean(X, y)[1]) == 20


def test_tomek_hand_fixture():
    X = np.array([[0.0], [1.0], [1.1], [3.0]])
    y = np.array([0, 0, 1, 1])
    Xc, yc = tomek_clean(X, y, majority=0)
    assert Xc.ravel().tolist() == [0.0, 1.1, 3.0]


def test_enn_removes_surrounded_point():
    X = np.array([[0.0, 0], [1, 0], [-1, 0], [0, 1], [10, 10], [10, 11], [11, 10]])
    y = np.array([1, 0, 0, 0, 1, 1, 1])
    Xc, yc = enn_clean(X, y, k=3)
    assert [0.0, 0.0] not in Xc.tolist()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hybrids_equal_manual_composition(seed):
    r = np.random.default_rng(seed)
    X, y = imbalanced(r, 60, 12)
    Xs, ys = smote(X, y, k=5, seed=seed)
    a = smote_tomek(X, y, k=5, seed=seed)
    b = tomek_clean(Xs, ys, majority=0)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = smote_enn(X, y, k=5, seed=seed)
    d = enn_clean(Xs, ys)
    assert np.array_equal(c[0], d[0]) and np.array_equal(c[1], d[1])
    removed = len(ys) - len(a[1])
    counts = np.bincount(a[1], minlength=2)
    assert abs(counts[0] - counts[1]) <= removed


def test_hybrid_equals_smote_when_cleaners_are_noops(rng):
    X = np.vstack([rng.normal(0, 0.1, (30, 2)), rng.normal(10, 0.1, (8, 2))])
    y = np.r_[np.zeros(30, int), np.ones(8, int)]
    s = smote(X, y, k=3, seed=9)
    t = smote_tomek(X, y, k=3, seed=9)
    assert np.array_equal(s[0], t[0])


# -- dispatcher ------------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["none", "class_weight", "random_over", "random_under", "smote",
                                  "adasyn", "smote_tomek", "smote_enn"])
def test_balance_deterministic(kind, rng):
    X, y = imbalanced(rng, 70, 14, d=3)
    spec = BalancerSpec(kind, 5, 42)
    a, b = balance(spec, X, y), balance(spec, X, y)
    for u, v in zip(a, b):
        assert np.array_equal(u, v)
    if kind in ("random_over", "smote"):
        assert len(a[1]) == 140
    if kind == "random_under":
        assert len(a[1]) == 28
    if kind == "class_weight":
        assert np.sum(a[2][y == 1]) == pytest.approx(np.sum(a[2][y == 0]))


def test_balancer_spec_validation():
    with pytest.raises(ValueError):
        BalancerSpec("bogus")
    with pytest.raises(ValueError):
        BalancerSpec("smote", k_neighbors=0)

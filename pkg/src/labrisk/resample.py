"""Class balancing applied to training rows only.

Nearest-neighbour searches are exact brute force on Euclidean distance, with
ties broken by the lower row index. Every sampler draws from a numpy
Generator built from its ``seed`` argument alone.
"""

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

BALANCERS = ("none", "class_weight", "random_over", "random_under", "smote", "adasyn",
             "smote_tomek", "smote_enn")

BALANCER_DISPLAY = {
    "none": "None",
    "class_weight": "None",
    "random_over": "RandomOverSampler",
    "random_under": "RandomUnderSampler",
    "smote": "SMOTE",
    "adasyn": "ADASYN",
    "smote_tomek": "SMOTETomek",
    "smote_enn": "SMOTEENN",
}


class ResampleError(ValueError):
    pass


@dataclass(frozen=True)
class BalancerSpec:
    kind: str = "none"
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in BALANCERS:
            raise ValueError(f"unknown balancer {self.kind!r}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def _counts(y):
    y = np.asarray(y).astype(np.int64).ravel()
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n0 == 0 or n1 == 0:
        raise ResampleError("both classes must be present")
    return y, n0, n1


def _minority_label(y):
    _, n0, n1 = _counts(y)
    return 1 if n1 <= n0 else 0


def class_weights(labels):
    """Balanced weights ``n_total / (2 * n_class)``."""
    y, n0, n1 = _counts(labels)
    n = n0 + n1
    return {0: n / (2.0 * n0), 1: n / (2.0 * n1)}


def sample_weights(labels):
    w = class_weights(labels)
    y = np.asarray(labels).astype(np.int64)
    return np.where(y == 1, w[1], w[0])


def kneighbors(query, ref, k, exclude_self=False, chunk=None):
    """Indices of the ``k`` nearest ``ref`` rows for each ``query`` row.

    With ``exclude_self`` the query rows must be the reference rows and each
    row's own index is skipped. Equal distances go to the lower index.
    """
    query = np.asarray(query, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    n_ref = ref.shape[0]
    if k > n_ref - (1 if exclude_self else 0):
        raise ResampleError(f"k={k} neighbours requested from {n_ref} reference rows")
    ref_sq = np.einsum("ij,ij->i", ref, ref)
    if chunk is None:
        chunk = max(1, (1 << 22) // max(n_ref, 1))  # ~32 MB of distances per block
    out = np.empty((query.shape[0], k), dtype=np.int64)
    for start in range(0, query.shape[0], chunk):
        q = query[start:start + chunk]
        dist = np.einsum("ij,ij->i", q, q)[:, None] + ref_sq[None, :] - 2.0 * q @ ref.T
        np.maximum(dist, 0.0, out=dist)
        if exclude_self:
            rows = np.arange(start, start + len(q))
            dist[np.arange(len(q)), rows] = np.inf
        if k == 1:
            out[start:start + len(q), 0] = np.argmin(dist, axis=1)  # first index on ties
            continue
        part = np.argpartition(dist, k - 1, axis=1)[:, :k]
        pd_ = np.take_along_axis(dist, part, axis=1)
        kth = pd_.max(axis=1, keepdims=True)
        # rows where the k-th distance is shared beyond the partition need the
        # full candidate set so the lower index wins
        ambiguous = np.flatnonzero((dist <= kth).sum(axis=1) > k)
        order = np.lexsort((part, pd_), axis=1)
        out[start:start + len(q)] = np.take_along_axis(part, order, axis=1)
        for i in ambiguous:
            cand = np.flatnonzero(dist[i] <= kth[i, 0])
            out[start + i] = cand[np.argsort(dist[i, cand], kind="stable")[:k]]
    return out


def random_over(X, y, seed=0):
    X = np.asarray(X)
    y, n0, n1 = _counts(y)
    if n0 == n1:
        return X.copy(), y.copy()
    minority = 1 if n1 < n0 else 0
    pool = np.flatnonzero(y == minority)
    rng = np.random.default_rng(seed)
    extra = pool[rng.integers(0, len(pool), abs(n0 - n1))]
    return np.vstack([X, X[extra]]), np.r_[y, y[extra]]


def random_under(X, y, seed=0):
    X = np.asarray(X)
    y, n0, n1 = _counts(y)
    if n0 == n1:
        return X.copy(), y.copy()
    majority = 0 if n0 > n1 else 1
    pool = np.flatnonzero(y == majority)
    rng = np.random.default_rng(seed)
    keep_major = rng.choice(pool, size=min(n0, n1), replace=False)
    keep = np.sort(np.r_[np.flatnonzero(y != majority), keep_major])
    return X[keep], y[keep]


def _open_uniform(rng, size):
    u = rng.random(size)
    while np.any(u == 0.0):
        zero = u == 0.0
        u[zero] = rng.random(int(zero.sum()))
    return u


def _interpolate(Xmin, nn, base, rng):
    """New points ``x_i + u * (x_nn - x_i)`` for base rows ``base``."""
    picks = nn[base, rng.integers(0, nn.shape[1], len(base))]
    u = _open_uniform(rng, len(base))[:, None]
    return Xmin[base] + u * (Xmin[picks] - Xmin[base])


def _check_k(n_min, k):
    if n_min <= k:
        raise ResampleError(
            f"minority class has {n_min} rows but k_neighbors={k}; use k_neighbors < {n_min}")


def smote(X, y, k=5, seed=0):
    X = np.asarray(X, dtype=np.float64)
    y, n0, n1 = _counts(y)
    minority = 1 if n1 < n0 else 0
    n_min, n_maj = min(n0, n1), max(n0, n1)
    _check_k(n_min, k)
    if n_min == n_maj:
        return X.copy(), y.copy()
    Xmin = X[y == minority]
    nn = kneighbors(Xmin, Xmin, k, exclude_self=True)
    rng = np.random.default_rng(seed)
    base = rng.integers(0, n_min, n_maj - n_min)
    new = _interpolate(Xmin, nn, base, rng)
    return np.vstack([X, new]), np.r_[y, np.full(len(new), minority)]


def largest_remainder(shares, total):
    """Integer allocation of ``total`` proportional to ``shares``.

    Floors first, then hands the leftover units to the largest fractional
    parts (lower index first on ties).
    """
    shares = np.asarray(shares, dtype=np.float64)
    raw = shares / shares.sum() * total
    alloc = np.floor(raw).astype(np.int64)
    left = int(total - alloc.sum())
    if left > 0:
        frac = raw - alloc
        order = np.argsort(-frac, kind="stable")
        alloc[order[:left]] += 1
    return alloc


def adasyn(X, y, k=5, seed=0):
    X = np.asarray(X, dtype=np.float64)
    y, n0, n1 = _counts(y)
    minority = 1 if n1 < n0 else 0
    n_min, n_maj = min(n0, n1), max(n0, n1)
    _check_k(n_min, k)
    G = n_maj - n_min
    if G == 0:
        return X.copy(), y.copy()
    min_idx = np.flatnonzero(y == minority)
    nn_all = kneighbors(X[min_idx], X, k + 1)
    ratios = np.empty(n_min)
    for i, row in enumerate(min_idx):
        neigh = nn_all[i][nn_all[i] != row][:k]
        ratios[i] = np.sum(y[neigh] != minority) / k
    if ratios.sum() == 0:
        logger.warning("ADASYN: no minority row has majority neighbours; using SMOTE allocation")
        return smote(X, y, k=k, seed=seed)
    alloc = largest_remainder(ratios, G)
    Xmin = X[min_idx]
    nn = kneighbors(Xmin, Xmin, k, exclude_self=True)
    rng = np.random.default_rng(seed)
    base = np.repeat(np.arange(n_min), alloc)
    new = _interpolate(Xmin, nn, base, rng)
    return np.vstack([X, new]), np.r_[y, np.full(len(new), minority)]


def tomek_clean(X, y, majority=None):
    """Drop the majority member of every Tomek link.

    ``majority`` defaults to the more frequent class (class 0 on a tie).
    """
    X = np.asarray(X, dtype=np.float64)
    y, n0, n1 = _counts(y)
    if majority is None:
        majority = 1 if n1 > n0 else 0
    nn = kneighbors(X, X, 1, exclude_self=True)[:, 0]
    idx = np.arange(len(y))
    linked = (nn[nn] == idx) & (y[nn] != y)
    drop = linked & (y == majority)
    return X[~drop], y[~drop]


def enn_clean(X, y, k=3):
    """Drop rows whose label disagrees with the majority of their k neighbours."""
    X = np.asarray(X, dtype=np.float64)
    y, _, _ = _counts(y)
    nn = kneighbors(X, X, k, exclude_self=True)
    votes = y[nn].sum(axis=1)
    majority_label = (votes * 2 > k).astype(np.int64)
    tie = votes * 2 == k
    keep = (majority_label == y) | tie
    return X[keep], y[keep]


def smote_tomek(X, y, k=5, seed=0):
    y_arr = np.asarray(y).astype(np.int64)
    majority = 1 - _minority_label(y_arr)
    Xs, ys = smote(X, y_arr, k=k, seed=seed)
    return tomek_clean(Xs, ys, majority=majority)


def smote_enn(X, y, k=5, seed=0):
    Xs, ys = smote(X, y, k=k, seed=seed)
    return enn_clean(Xs, ys)


def balance(spec, X, y):
    """Apply ``spec`` to training rows. Returns ``(X, y, sample_weight)``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    kind = spec.kind
    if kind == "none":
        return X, y, np.ones(len(y))
    if kind == "class_weight":
        return X, y, sample_weights(y)
    fn = {
        "random_over": lambda: random_over(X, y, seed=spec.seed),
        "random_under": lambda: random_under(X, y, seed=spec.seed),
        "smote": lambda: smote(X, y, k=spec.k_neighbors, seed=spec.seed),
        "adasyn": lambda: adasyn(X, y, k=spec.k_neighbors, seed=spec.seed),
        "smote_tomek": lambda: smote_tomek(X, y, k=spec.k_neighbors, seed=spec.seed),
        "smote_enn": lambda: smote_enn(X, y, k=spec.k_neighbors, seed=spec.seed),
    }[kind]
    Xb, yb = fn()
    _counts(yb)
    return Xb, yb, np.ones(len(yb))

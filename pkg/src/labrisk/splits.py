"""Subject-grouped partitioning: one train/validation/test split and k-fold CV."""

from dataclasses import dataclass

import numpy as np


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple = (0.60, 0.20, 0.20)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or min(self.fractions) < 0:
            raise SplitError("fractions must be three non-negative numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise SplitError("fractions must sum to 1")


def group_shuffle_split(groups, spec=SplitSpec()):
    """Row indices ``(train, val, test)``; whole subjects go to one partition.

    Unique groups are shuffled by ``spec.seed`` and cut by cumulative subject
    fraction (rounded), so 10 subjects at 60/20/20 give 6/2/2.
    """
    groups = np.asarray(groups)
    uniq = np.unique(groups)
    n = len(uniq)
    if n < 3:
        raise SplitError(f"need at least 3 subjects to split, got {n}")
    perm = np.random.default_rng(int(spec.seed)).permutation(n)
    n_train = int(round(spec.fractions[0] * n))
    n_val = int(round((spec.fractions[0] + spec.fractions[1]) * n)) - n_train
    part_of_group = np.empty(n, dtype=np.int64)
    part_of_group[perm[:n_train]] = 0
    part_of_group[perm[n_train:n_train + n_val]] = 1
    part_of_group[perm[n_train + n_val:]] = 2
    part = part_of_group[np.searchsorted(uniq, groups)]
    return tuple(np.flatnonzero(part == p) for p in range(3))


def grouped_kfold(groups, folds=5, seed=0):
    """``[(fit_idx, score_idx), ...]`` with no group on both sides of a fold.

    Shuffled groups are dealt round-robin, so fold sizes differ by at most one
    subject.
    """
    groups = np.asarray(groups)
    uniq = np.unique(groups)
    if folds < 2:
        raise SplitError("need at least 2 folds")
    if len(uniq) < folds:
        raise SplitError(f"{len(uniq)} distinct groups cannot fill {folds} folds")
    perm = np.random.default_rng(int(seed)).permutation(len(uniq))
    fold_of_group = np.empty(len(uniq), dtype=np.int64)
    fold_of_group[perm] = np.arange(len(uniq)) % folds
    fold = fold_of_group[np.searchsorted(uniq, groups)]
    return [(np.flatnonzero(fold != f), np.flatnonzero(fold == f)) for f in range(folds)]

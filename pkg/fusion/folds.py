"""Subject-level stratified k-fold splits."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldSplit:
    index: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def check_disjoint(self) -> None:
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise AssertionError(f"fold {self.index}: subjects in both train and test: {sorted(overlap)}")


def kfold_split(
    subject_ids: Sequence[str],
    labels: Sequence[int],
    k: int = 10,
    seed: int = 0,
) -> list[FoldSplit]:
    """Each class is shuffled and dealt round-robin, the deal continuing across
    classes, so folds differ in size by at most one and classes spread evenly."""
    ids = [str(s) for s in subject_ids]
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be unique")
    if len(ids) != len(labels):
        raise ValueError(f"{len(ids)} subjects but {len(labels)} labels")
    if not 2 <= k <= len(ids):
        raise ValueError(f"k={k} folds need 2 <= k <= {len(ids)} subjects")

    rng = np.random.default_rng(seed)
    labels_arr = np.asarray(labels)
    assignment: dict[str, int] = {}
    slot = 0
    for cls in sorted(np.unique(labels_arr).tolist()):
        members = [s for s, y in zip(ids, labels_arr.tolist()) if y == cls]
        if len(members) < k:
            logger.warning("[Folds] class %s has %d subjects for %d folds; stratification degrades", cls, len(members), k)
        for pos in rng.permutation(len(members)):
            assignment[members[pos]] = slot % k
            slot += 1

    folds = []
    for i in range(k):
        test = tuple(s for s in ids if assignment[s] == i)
        train = tuple(s for s in ids if assignment[s] != i)
        folds.append(FoldSplit(i, train, test))
    return folds

"""Training-loop utilities shared by the audio and text branches."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from core.errors import TrainingError
from core.tensor import LayerParams

logger = logging.getLogger(__name__)


def require_two_classes(labels: Sequence[int] | np.ndarray, what: str) -> None:
    present = set(np.unique(np.asarray(labels)).tolist())
    if present != {0, 1}:
        raise TrainingError(f"{what} needs both classes, got labels {sorted(present)}")


def snapshot(layers: Sequence[LayerParams]) -> dict[str, dict[str, np.ndarray]]:
    return {layer.name: {k: v.copy() for k, v in layer.arrays.items()} for layer in layers}


def restore(layers: Sequence[LayerParams], saved: dict[str, dict[str, np.ndarray]]) -> None:
    for layer in layers:
        for key, arr in saved[layer.name].items():
            layer.arrays[key][...] = arr


class EarlyStopping:
    """Stop once `patience` consecutive epochs fail to improve the monitored loss.

    patience=0 stops at the first non-improving epoch. The best weights are
    kept and restored when training ends.
    """

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_epoch = -1
        self.wait = 0
        self._best_weights: dict[str, dict[str, np.ndarray]] | None = None

    def update(self, epoch: int, loss: float, layers: Sequence[LayerParams]) -> bool:
        if loss < self.best - self.min_delta:
            self.best = loss
            self.best_epoch = epoch
            self.wait = 0
            self._best_weights = snapshot(layers)
            return False
        self.wait += 1
        return self.wait >= self.patience

    def restore_best(self, layers: Sequence[LayerParams]) -> None:
        if self._best_weights is not None:
            restore(layers, self._best_weights)


@dataclass
class TrainingHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int | None = None
    best_epoch: int | None = None

    def append(self, epoch: int, train_loss: float, val_loss: float) -> None:
        self.epochs.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"epoch": self.epochs, "train_loss": self.train_loss, "val_loss": self.val_loss})

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.8g")
        return path


def split_validation(
    groups: Sequence[str],
    labels: Sequence[int],
    fraction: float,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Subject-disjoint (train_idx, val_idx) over samples grouped by subject id.

    Each class gives round(fraction * n_subjects) subjects to validation while
    keeping at least one subject in training.
    """
    groups = np.asarray(groups)
    labels = np.asarray(labels)
    subject_label: dict[str, int] = {}
    for g, y in zip(groups.tolist(), labels.tolist()):
        subject_label.setdefault(g, int(y))

    rng = np.random.default_rng(seed)
    val_subjects: set[str] = set()
    for cls in (0, 1):
        members = sorted(s for s, y in subject_label.items() if y == cls)
        n_val = min(int(round(fraction * len(members))), max(len(members) - 1, 0))
        if n_val:
            picked = rng.permutation(len(members))[:n_val]
            val_subjects.update(members[i] for i in picked)

    in_val = np.array([g in val_subjects for g in groups.tolist()], dtype=bool)
    return np.flatnonzero(~in_val), np.flatnonzero(in_val)


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]

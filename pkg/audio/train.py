"""Mini-batch Adam training of m-VGGish on subject-labelled patches."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from audio.model import MVGGish
from core import kernels as K
from core.config import RunConfig
from core.errors import ShapeError
from core.optim import Adam
from core.tensor import GradTape, Tensor
from core.training import EarlyStopping, TrainingHistory, minibatches, require_two_classes, split_validation

logger = logging.getLogger(__name__)


@dataclass
class PatchDataset:
    """Patches [N, k, 64]; each patch carries its subject's label (1 = AD) and id."""

    patches: np.ndarray
    labels: np.ndarray
    groups: np.ndarray

    def __post_init__(self) -> None:
        self.patches = np.asarray(self.patches, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.groups = np.asarray(self.groups).astype(str)
        if not (len(self.patches) == len(self.labels) == len(self.groups)):
            raise ShapeError("patches, labels and groups must have equal length")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx: np.ndarray) -> "PatchDataset":
        return PatchDataset(self.patches[idx], self.labels[idx], self.groups[idx])


@dataclass(frozen=True)
class AudioTrainSettings:
    lr: float = 1e-6
    batch_size: int = 32
    epochs: int = 100
    patience: int = 30
    freeze_backbone: bool = False
    val_fraction: float = 0.1
    bce_eps: float = 1e-7
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "AudioTrainSettings":
        return cls(
            lr=cfg.audio_lr, batch_size=cfg.audio_batch, epochs=cfg.audio_epochs,
            patience=cfg.audio_patience, freeze_backbone=cfg.audio_freeze_backbone,
            val_fraction=cfg.val_fraction, bce_eps=cfg.bce_eps, seed=cfg.seed,
        )


def evaluate_loss(model: MVGGish, data: PatchDataset, eps: float, batch_size: int = 64) -> float:
    total = 0.0
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        p = model.ad_probability(Tensor(data.patches[sl]), mode="infer")
        total += K.bce_loss(p, data.labels[sl], eps) * p.shape[0]
    return total / max(len(data), 1)


def train_audio(
    model: MVGGish,
    dataset: PatchDataset,
    settings: AudioTrainSettings,
) -> tuple[MVGGish, TrainingHistory]:
    require_two_classes(dataset.labels, "audio training")
    train_idx, val_idx = split_validation(dataset.groups, dataset.labels, settings.val_fraction, settings.seed)
    train, val = dataset.subset(train_idx), dataset.subset(val_idx)
    require_two_classes(train.labels, "audio training split")

    trainable = (
        model.norm_layers() + model.head() if settings.freeze_backbone else model.parameters()
    )
    update_stats = not settings.freeze_backbone
    opt = Adam(settings.lr)
    stopper = EarlyStopping(settings.patience)
    history = TrainingHistory()
    rng = np.random.default_rng(settings.seed)
    logger.info(
        "[AudioTrain] %d train / %d val patches, lr=%g batch=%d patience=%d%s",
        len(train), len(val), settings.lr, settings.batch_size, settings.patience,
        " (backbone frozen)" if settings.freeze_backbone else "",
    )

    for epoch in range(settings.epochs):
        running = 0.0
        for idx in minibatches(len(train), settings.batch_size, rng):
            y = train.labels[idx]
            tape = GradTape()
            p = model.ad_probability(Tensor(train.patches[idx]), mode="train", tape=tape, update_stats=update_stats)
            running += K.bce_loss(p, y, settings.bce_eps) * len(idx)
            grads = tape.backward(p, K.bce_grad(p, y, settings.bce_eps))
            opt.step(trainable, grads)
        train_loss = running / len(train)
        val_loss = evaluate_loss(model, val, settings.bce_eps) if len(val) else train_loss
        history.append(epoch, train_loss, val_loss)
        logger.info("[AudioTrain] epoch %d train_loss=%.5f val_loss=%.5f", epoch, train_loss, val_loss)
        if stopper.update(epoch, val_loss, model.parameters()):
            history.stopped_epoch = epoch
            logger.info("[AudioTrain] early stop at epoch %d (best %d)", epoch, stopper.best_epoch)
            break

    stopper.restore_best(model.parameters())
    history.best_epoch = stopper.best_epoch
    return model, history

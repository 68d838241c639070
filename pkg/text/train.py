"""
Segment-level training of the text model.

Each example is (segment, its transcript, the subject label). The word-vector
CNN, contextual encoder and head are updated per mini-batch. The sentence
encoder sees one whole transcript per forward pass, so it is run once per
transcript at the start of an epoch; the gradients its vectors receive across
all batches are accumulated and applied in a single step at epoch end.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core import kernels as K
from core.config import RunConfig
from core.errors import ShapeError
from core.optim import Adam, check_finite
from core.tensor import GradTape, LayerParams, Tensor
from core.training import EarlyStopping, TrainingHistory, minibatches, require_two_classes, split_validation
from text.model import TextModel
from text.segments import TranscriptSegment, segment_tokens
from text.transcripts import Transcript

logger = logging.getLogger(__name__)


@dataclass
class TextDataset:
    segments: list[TranscriptSegment]
    labels: np.ndarray
    transcripts: dict[str, Transcript]

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.segments) != len(self.labels):
            raise ShapeError("segments and labels must have equal length")
        unknown = {s.transcript_id for s in self.segments} - set(self.transcripts)
        if unknown:
            raise ShapeError(f"segments reference unknown transcripts {sorted(unknown)}")

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def groups(self) -> np.ndarray:
        return np.array([s.transcript_id for s in self.segments])

    @classmethod
    def from_transcripts(cls, transcripts: Sequence[Transcript], labels: Sequence[int]) -> "TextDataset":
        """Every segment inherits its subject's label."""
        segments: list[TranscriptSegment] = []
        seg_labels: list[int] = []
        for transcript, label in zip(transcripts, labels, strict=True):
            segs = segment_tokens(transcript.tokens, transcript.subject_id)
            segments.extend(segs)
            seg_labels.extend([int(label)] * len(segs))
        return cls(segments, np.asarray(seg_labels), {t.subject_id: t for t in transcripts})

    def subset(self, idx: np.ndarray) -> "TextDataset":
        segments = [self.segments[i] for i in idx]
        keep = {s.transcript_id for s in segments}
        return TextDataset(
            segments, self.labels[idx], {k: v for k, v in self.transcripts.items() if k in keep}
        )


@dataclass(frozen=True)
class TextTrainSettings:
    lr: float = 1e-6
    batch_size: int = 32
    epochs: int = 100
    patience: int = 30
    freeze_wordvecs: bool = False
    freeze_cnn: bool = False
    freeze_encoders: bool = False
    val_fraction: float = 0.1
    bce_eps: float = 1e-7
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "TextTrainSettings":
        return cls(
            lr=cfg.text_lr, batch_size=cfg.text_batch, epochs=cfg.text_epochs,
            patience=cfg.text_patience, freeze_wordvecs=cfg.freeze_wordvecs,
            freeze_cnn=cfg.freeze_cnn, freeze_encoders=cfg.freeze_encoders,
            val_fraction=cfg.val_fraction, bce_eps=cfg.bce_eps, seed=cfg.seed,
        )


def batch_layers(model: TextModel, settings: TextTrainSettings) -> list[LayerParams]:
    layers = list(model.head_layers())
    if not settings.freeze_wordvecs:
        layers.append(model.wordvec_layer)
    if not settings.freeze_cnn:
        layers.extend(model.cnn_layers())
    if not settings.freeze_encoders:
        layers.extend(model.context_layers())
    return layers


def evaluate_text_loss(model: TextModel, data: TextDataset, eps: float) -> float:
    probs = model.predict_segments(data.segments, data.transcripts)
    return K.bce_loss(probs, data.labels, eps)


class _SentencePass:
    """Per-transcript sentence vectors for one epoch, with their tapes."""

    def __init__(self, model: TextModel, transcripts: Sequence[Transcript]):
        self.model = model
        self.tapes: dict[str, tuple[GradTape, Tensor]] = {}
        self.vectors: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        for t in transcripts:
            tape = GradTape()
            vec = model.sentence.embed(model.transcript_input(t), tape=tape)
            self.tapes[t.subject_id] = (tape, vec)
            self.vectors[t.subject_id] = vec.data[0]
            self.grads[t.subject_id] = np.zeros_like(vec.data[0])

    def table(self, transcript_ids: Sequence[str]) -> Tensor:
        return Tensor(np.stack([self.vectors[t] for t in transcript_ids]))

    def accumulate(self, transcript_ids: Sequence[str], grad: np.ndarray) -> None:
        for row, tid in enumerate(transcript_ids):
            self.grads[tid] += grad[row]

    def apply(self, opt: Adam) -> None:
        layers = self.model.sentence_layers()
        totals: dict[str, dict[str, np.ndarray]] = {
            layer.name: {k: np.zeros_like(v) for k, v in layer.trainable().items()} for layer in layers
        }
        for tid, (tape, vec) in self.tapes.items():
            grads = tape.backward(vec, self.grads[tid][None].astype(vec.dtype))
            for layer in layers:
                for key, g in grads.for_layer(layer).items():
                    totals[layer.name][key] += g
        for layer in layers:
            check_finite(layer.name, totals[layer.name])
        for layer in layers:
            opt.apply(layer, totals[layer.name])


def train_text(
    model: TextModel,
    dataset: TextDataset,
    settings: TextTrainSettings,
) -> tuple[TextModel, TrainingHistory]:
    require_two_classes(dataset.labels, "text training")
    train_idx, val_idx = split_validation(dataset.groups, dataset.labels, settings.val_fraction, settings.seed)
    train, val = dataset.subset(train_idx), dataset.subset(val_idx)
    require_two_classes(train.labels, "text training split")

    per_batch = batch_layers(model, settings)
    sentence_trainable = not settings.freeze_encoders and bool(model.sentence_layers())
    opt = Adam(settings.lr)
    stopper = EarlyStopping(settings.patience)
    history = TrainingHistory()
    rng = np.random.default_rng(settings.seed)
    model.register(list(dataset.transcripts.values()))
    logger.info(
        "[TextTrain] %d train / %d val segments from %d transcripts, lr=%g batch=%d patience=%d",
        len(train), len(val), len(dataset.transcripts), settings.lr, settings.batch_size, settings.patience,
    )

    for epoch in range(settings.epochs):
        sentences = _SentencePass(model, list(train.transcripts.values())) if sentence_trainable else None
        running = 0.0
        for idx in minibatches(len(train), settings.batch_size, rng):
            batch = model.segment_batch([train.segments[i] for i in idx])
            y = train.labels[idx]
            if sentences is not None:
                table = sentences.table(batch.transcript_ids)
            else:
                table = Tensor(model.sentence_cache.get_many(batch.transcript_ids))
            tape = GradTape()
            p = model.forward(batch, table, mode="train", tape=tape)
            running += K.bce_loss(p, y, settings.bce_eps) * len(idx)
            grads = tape.backward(p, K.bce_grad(p, y, settings.bce_eps))
            opt.step(per_batch, grads)
            if sentences is not None:
                sentences.accumulate(batch.transcript_ids, grads.wrt(table))
        if sentences is not None:
            sentences.apply(opt)
            model.sentence_cache.invalidate()

        train_loss = running / len(train)
        val_loss = evaluate_text_loss(model, val, settings.bce_eps) if len(val) else train_loss
        history.append(epoch, train_loss, val_loss)
        logger.info("[TextTrain] epoch %d train_loss=%.5f val_loss=%.5f", epoch, train_loss, val_loss)
        if stopper.update(epoch, val_loss, model.parameters()):
            history.stopped_epoch = epoch
            logger.info("[TextTrain] early stop at epoch %d (best %d)", epoch, stopper.best_epoch)
            break

    stopper.restore_best(model.parameters())
    model.sentence_cache.invalidate()
    history.best_epoch = stopper.best_epoch
    return model, history

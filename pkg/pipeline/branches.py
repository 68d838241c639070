"""Fit and apply the audio and text branches for a set of manifest subjects."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
from tqdm import tqdm

from audio.features import NUM_MEL_BINS, partition_patches
from audio.model import MVGGish, build_mvggish, load_backbone, predict_clip
from audio.train import AudioTrainSettings, PatchDataset, train_audio
from core.config import RunConfig
from core.errors import AudioFormatError, TrainingError
from core.training import TrainingHistory
from corpus.manifest import SubjectRecord
from memory.feature_cache import DenoiseSettings, FeatureCache
from text.model import TextModel, TextModelConfig, TextPrediction, load_encoder_weights, predict_transcript
from text.train import TextDataset, TextTrainSettings, train_text
from text.transcripts import Transcript, load_transcript
from text.wordpiece import WordPieceVocab, build_vocab
from text.wordvectors import WordVectorTable

logger = logging.getLogger(__name__)


# ── audio ─────────────────────────────────────────────────────

def feature_cache(cfg: RunConfig) -> FeatureCache:
    return FeatureCache(cfg.cache_dir, DenoiseSettings(
        cfg.use_denoise, cfg.denoise_alpha, cfg.denoise_init_frames, cfg.denoise_gain_floor,
    ))


def extract_features(cfg: RunConfig, records: Sequence[SubjectRecord], cache: FeatureCache) -> dict[str, int]:
    """Fill the cache for every clip; returns frame counts per subject (0 when unreadable)."""
    with_audio = [r for r in records if r.audio_path is not None]

    def one(record: SubjectRecord) -> int:
        try:
            return cache.get(record.audio_path).shape[0]
        except (AudioFormatError, OSError) as exc:
            logger.warning("[Features] %s: %s", record.subject_id, exc)
            return 0

    progress = dict(desc="features", unit="clip", disable=len(with_audio) < 2, leave=False)
    if cfg.jobs == 1:
        frames = [one(r) for r in tqdm(with_audio, **progress)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            frames = list(tqdm(pool.map(one, with_audio), total=len(with_audio), **progress))
    return {r.subject_id: n for r, n in zip(with_audio, frames)}


def clip_patches(cache: FeatureCache, record: SubjectRecord, k: int, max_patches: int = 0) -> np.ndarray:
    if record.audio_path is None:
        return np.empty((0, k, NUM_MEL_BINS), dtype=np.float32)
    patches = partition_patches(cache.get(record.audio_path), k, record.subject_id)
    if max_patches:
        patches = patches[:max_patches]
    if not patches:
        return np.empty((0, k, NUM_MEL_BINS), dtype=np.float32)
    return np.stack([p.frames.data for p in patches])


def audio_dataset(cfg: RunConfig, records: Sequence[SubjectRecord], cache: FeatureCache) -> PatchDataset:
    chunks, labels, groups = [], [], []
    for r in records:
        patches = clip_patches(cache, r, cfg.patch_frames, cfg.audio_max_patches)
        if not len(patches):
            logger.warning("[Audio] %s has no complete %d-frame patch; skipped", r.subject_id, cfg.patch_frames)
            continue
        chunks.append(patches)
        labels.extend([r.label] * len(patches))
        groups.extend([r.subject_id] * len(patches))
    if not chunks:
        raise TrainingError("no audio patches to train on")
    return PatchDataset(np.concatenate(chunks), np.asarray(labels), np.asarray(groups))


def fit_audio(
    cfg: RunConfig, records: Sequence[SubjectRecord], cache: FeatureCache
) -> tuple[MVGGish, TrainingHistory]:
    model = build_mvggish(cfg.seed, cfg.audio_width_divisor, cfg.bn_momentum, cfg.bn_epsilon)
    if cfg.audio_backbone:
        load_backbone(model, cfg.audio_backbone)
    return train_audio(model, audio_dataset(cfg, records, cache), AudioTrainSettings.from_config(cfg))


def predict_audio(
    cfg: RunConfig, model: MVGGish, records: Sequence[SubjectRecord], cache: FeatureCache
) -> dict[str, float | None]:
    out: dict[str, float | None] = {}
    for r in records:
        patches = clip_patches(cache, r, cfg.patch_frames)
        out[r.subject_id] = predict_clip(model, patches, r.subject_id).p_a if len(patches) else None
    return out


# ── text ──────────────────────────────────────────────────────

def load_transcripts(cfg: RunConfig, records: Sequence[SubjectRecord]) -> dict[str, Transcript]:
    out = {}
    for r in records:
        path = r.transcript_for(cfg.source)
        if path is None or not path.is_file():
            logger.warning("[Text] %s has no %s transcript", r.subject_id, cfg.source)
            continue
        transcript = load_transcript(path, r.subject_id, cfg.source, participant_only=cfg.participant_only)
        if not transcript.tokens:
            logger.warning("[Text] %s: empty %s transcript", r.subject_id, cfg.source)
            continue
        out[r.subject_id] = transcript
    return out


def build_text_model(cfg: RunConfig, transcripts: Sequence[Transcript]) -> TextModel:
    token_lists = [t.tokens for t in transcripts]
    vocab = WordPieceVocab.from_file(cfg.vocab_file) if cfg.vocab_file else build_vocab(token_lists, cfg.vocab_size)
    if cfg.wordvec_file:
        table = WordVectorTable.from_vec_file(cfg.wordvec_file, subwords=cfg.wordvec_subwords, seed=cfg.seed)
    else:
        words = {tok.lower() for tokens in token_lists for tok in tokens}
        table = WordVectorTable.random(words, cfg.wordvec_dim, seed=cfg.seed, subwords=cfg.wordvec_subwords)
    model = TextModel(TextModelConfig.from_config(cfg), vocab, table)
    if cfg.encoder_weights:
        load_encoder_weights(model, cfg.encoder_weights)
    return model


def fit_text(
    cfg: RunConfig, records: Sequence[SubjectRecord], transcripts: dict[str, Transcript]
) -> tuple[TextModel, TrainingHistory]:
    kept = [r for r in records if r.subject_id in transcripts]
    chosen = [transcripts[r.subject_id] for r in kept]
    model = build_text_model(cfg, chosen)
    dataset = TextDataset.from_transcripts(chosen, [r.label for r in kept])
    return train_text(model, dataset, TextTrainSettings.from_config(cfg))


def predict_text(
    model: TextModel, records: Sequence[SubjectRecord], transcripts: dict[str, Transcript]
) -> dict[str, TextPrediction]:
    return {
        r.subject_id: predict_transcript(model, transcripts[r.subject_id])
        for r in records if r.subject_id in transcripts
    }

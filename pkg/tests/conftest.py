"""Shared fixtures: seeded RNGs, tiny configurations and a small synthetic corpus."""
from __future__ import annotations

import numpy as np
import pytest

from core.config import RunConfig
from corpus.synth import synth_corpus
from text.transcripts import make_transcript
from text.wordpiece import build_vocab
from text.wordvectors import WordVectorTable


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg(tmp_path) -> RunConfig:
    return RunConfig(
        out_dir=str(tmp_path / "run"),
        cache_dir=str(tmp_path / "cache"),
        folds=2,
        audio_lr=1e-3,
        audio_epochs=2,
        audio_patience=2,
        audio_width_divisor=16,
        audio_batch=16,
        text_lr=1e-3,
        text_epochs=2,
        text_patience=2,
        context_dim=8,
        sentence_dim=8,
        encoder_layers=1,
        encoder_heads=2,
        wordvec_dim=12,
        cnn_filters=4,
        cnn_out=6,
        sentence_max_len=48,
        bootstrap_samples=50,
    )


@pytest.fixture
def transcripts():
    texts = {
        "A1": "uh the boy is uh taking um the cookies from the jar uh and the stool is uh falling",
        "A2": "the the mother is uh washing um dishes uh and the water is uh running over",
        "H1": "the boy is taking cookies from the jar while the mother is washing the dishes",
        "H2": "the girl is asking for a cookie and the water is running over the sink",
    }
    return [make_transcript(sid, "manual", text) for sid, text in texts.items()]


@pytest.fixture
def vocab(transcripts):
    return build_vocab([t.tokens for t in transcripts], size=200)


@pytest.fixture
def wordvecs(transcripts):
    words = {tok.lower() for t in transcripts for tok in t.tokens}
    return WordVectorTable.random(words, dim=12, seed=3)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    return synth_corpus(8, seed=5, out_dir=out, duration=2.0, utterances=6)

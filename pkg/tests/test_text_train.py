import numpy as np
import pytest

from core.config import RunConfig
from core.errors import ShapeError, TrainingError
from text.model import TextModel, TextModelConfig
from text.segments import segment_tokens
from text.train import TextDataset, TextTrainSettings, batch_layers, train_text

TINY = dict(
    cnn_filters=4, cnn_out=6, context_dim=8, sentence_dim=8,
    encoder_layers=1, encoder_heads=2, sentence_max_len=48,
)
LABELS = {"A1": 1, "A2": 1, "H1": 0, "H2": 0}


@pytest.fixture
def model(vocab, wordvecs):
    return TextModel(TextModelConfig(**TINY), vocab, wordvecs)


@pytest.fixture
def dataset(transcripts):
    return TextDataset.from_transcripts(transcripts, [LABELS[t.subject_id] for t in transcripts])


def _copies(layers):
    return {(layer.name, k): v.copy() for layer in layers for k, v in layer.trainable().items()}


def _changed(layers, before):
    return {
        layer.name for layer in layers
        for k, v in layer.trainable().items() if not np.array_equal(v, before[(layer.name, k)])
    }


class TestDataset:
    def test_segments_inherit_labels(self, dataset, transcripts):
        assert len(dataset) == sum(len(segment_tokens(t.tokens)) for t in transcripts)
        for seg, label in zip(dataset.segments, dataset.labels):
            assert label == LABELS[seg.transcript_id]
        assert set(dataset.groups.tolist()) == set(LABELS)

    def test_subset_keeps_needed_transcripts(self, dataset):
        idx = np.flatnonzero(dataset.groups == "H1")
        sub = dataset.subset(idx)
        assert set(sub.transcripts) == {"H1"}
        assert np.all(sub.labels == 0)

    def test_unknown_transcript(self, dataset):
        with pytest.raises(ShapeError):
            TextDataset(dataset.segments, dataset.labels, {})

    def test_settings_from_config(self):
        s = TextTrainSettings.from_config(RunConfig(text_lr=0.5, text_batch=4, freeze_cnn=True))
        assert (s.lr, s.batch_size, s.freeze_cnn, s.freeze_wordvecs) == (0.5, 4, True, False)


class TestBatchLayers:
    def test_everything_trainable(self, model):
        names = {layer.name for layer in batch_layers(model, TextTrainSettings())}
        assert {"concat_bn", "out", "wordvec", "cnn_w2", "cnn_proj", "ctx.tok"} <= names
        assert not any(n.startswith("sent.") for n in names)

    def test_frozen_branches(self, model):
        settings = TextTrainSettings(freeze_wordvecs=True, freeze_cnn=True, freeze_encoders=True)
        assert [layer.name for layer in batch_layers(model, settings)] == ["concat_bn", "out"]


class TestTraining:
    def test_all_branches_update(self, model, dataset):
        before = _copies(model.parameters())
        settings = TextTrainSettings(lr=1e-2, batch_size=8, epochs=2, patience=5, val_fraction=0.0)
        _, history = train_text(model, dataset, settings)
        assert all(np.isfinite(history.train_loss))
        changed = _changed(model.parameters(), before)
        assert {"out", "wordvec", "cnn_w3", "ctx.b0.q", "sent.b0.q", "sent.tok"} <= changed

    def test_frozen_branches_stay_fixed(self, model, dataset):
        before = _copies(model.parameters())
        settings = TextTrainSettings(
            lr=1e-2, batch_size=8, epochs=2, patience=5, val_fraction=0.0,
            freeze_wordvecs=True, freeze_cnn=True, freeze_encoders=True,
        )
        train_text(model, dataset, settings)
        assert _changed(model.parameters(), before) <= {"concat_bn", "out"}
        assert "out" in _changed(model.parameters(), before)

    def test_loss_decreases(self, model, dataset):
        settings = TextTrainSettings(lr=1e-2, batch_size=8, epochs=8, patience=8, val_fraction=0.0)
        _, history = train_text(model, dataset, settings)
        assert history.train_loss[-1] < history.train_loss[0]

    def test_cache_cleared_after_training(self, model, dataset):
        train_text(model, dataset, TextTrainSettings(lr=1e-2, batch_size=8, epochs=1, val_fraction=0.0))
        assert len(model.sentence_cache) == 0

    def test_single_class(self, model, transcripts):
        ad = [t for t in transcripts if LABELS[t.subject_id] == 1]
        data = TextDataset.from_transcripts(ad, [1] * len(ad))
        with pytest.raises(TrainingError):
            train_text(model, data, TextTrainSettings(epochs=1))

import numpy as np
import pytest

from core import shared_encoder
from core.errors import EmbeddingKeyError, ShapeError, WeightFormatError
from core.gradcheck import grad_check
from core.tensor import Tensor
from core.weights import save_weights
from text.encoders import (
    SENTENCE_START, FileEmbedder, MiniEncoder, SentenceTransformerEmbedder, read_embedding_file,
    write_embedding_file,
)
from text.model import (
    TextModel,
    TextModelConfig,
    TextPrediction,
    aggregate_text,
    classify_segment,
    highlight_top5,
    load_encoder_weights,
    load_text_model,
    predict_transcript,
    render_highlights,
    save_text_model,
    top_segments,
)
from text.segments import segment_tokens
from text.transcripts import make_transcript

TINY = dict(
    cnn_filters=4, cnn_out=6, context_dim=8, sentence_dim=8,
    encoder_layers=1, encoder_heads=2, sentence_max_len=48,
)


@pytest.fixture
def model(vocab, wordvecs):
    return TextModel(TextModelConfig(**TINY), vocab, wordvecs)


@pytest.fixture
def by_id(transcripts):
    return {t.subject_id: t for t in transcripts}


class TestStructure:
    def test_concat_width(self, model):
        assert model.concat_dim == 6 + 8 + 8
        assert model.out["weight"].shape == (22, 1)
        assert [layer.name for layer in model.cnn_layers()] == ["cnn_w2", "cnn_w3", "cnn_w4", "cnn_proj"]

    def test_wordvec_layer_shares_table(self, model, wordvecs):
        assert model.wordvec_layer["weight"] is wordvecs.vectors

    def test_cnn_width_beyond_matrix(self, vocab, wordvecs):
        with pytest.raises(ShapeError, match="max_tokens"):
            TextModel(TextModelConfig(cnn_widths=(9,), **TINY), vocab, wordvecs)

    def test_fasttext_cnn_output(self, model, rng):
        out = model.fasttext_cnn_forward(Tensor(rng.standard_normal((8, 12))))
        assert out.shape == (6,)

    def test_cnn_rejects_wrong_width(self, model):
        with pytest.raises(ShapeError):
            model.fasttext_cnn_forward(Tensor(np.zeros((8, 5))))


class TestPrediction:
    def test_probabilities_and_mean(self, model, transcripts):
        pred = predict_transcript(model, transcripts[0])
        probs = np.array(pred.segment_probs)
        assert len(probs) == len(segment_tokens(transcripts[0].tokens))
        assert np.all((probs > 0) & (probs < 1))
        assert pred.p_t == pytest.approx(probs.mean())
        assert len(pred.top) == min(5, len(probs))

    def test_zero_head_gives_one_half(self, model, transcripts):
        model.out.arrays["weight"][...] = 0.0
        model.out.arrays["bias"][...] = 0.0
        pred = predict_transcript(model, transcripts[1])
        np.testing.assert_allclose(pred.segment_probs, 0.5)

    def test_independent_of_batch_composition(self, model, transcripts, by_id):
        own = segment_tokens(transcripts[0].tokens, transcripts[0].subject_id)
        mixed = own + segment_tokens(transcripts[2].tokens, transcripts[2].subject_id)
        alone = model.predict_segments(own, by_id)
        together = model.predict_segments(mixed, by_id, batch_size=3)
        np.testing.assert_allclose(together[:len(own)], alone, rtol=1e-5, atol=1e-6)

    def test_sentence_encoded_once_per_transcript(self, model, transcripts):
        for t in transcripts:
            predict_transcript(model, t)
        predict_transcript(model, transcripts[0])
        assert model.sentence_cache.encoder_calls == len(transcripts)

    def test_changed_transcript_is_reencoded(self, model, transcripts):
        predict_transcript(model, transcripts[0])
        edited = make_transcript(transcripts[0].subject_id, "manual", "the boy is on the stool")
        predict_transcript(model, edited)
        assert model.sentence_cache.encoder_calls == 2

    def test_classify_segment_matches_batch(self, model, transcripts, by_id):
        segs = segment_tokens(transcripts[3].tokens, transcripts[3].subject_id)
        batch = model.predict_segments(segs, by_id)
        assert classify_segment(model, segs[1], transcripts[3]) == pytest.approx(batch[1], rel=1e-5)

    def test_aggregate_empty(self):
        with pytest.raises(ValueError):
            aggregate_text([])


class TestTopSegments:
    def test_ties_prefer_earlier_start(self):
        assert top_segments([0.5, 0.9, 0.5, 0.9, 0.1], [0, 4, 8, 12, 16], k=3) == (1, 3, 0)

    def test_fewer_than_k(self):
        assert top_segments([0.2, 0.3], [0, 4]) == (1, 0)


class TestHighlights:
    @pytest.fixture
    def transcript(self):
        return make_transcript("S7", "manual", " ".join(f"w{i}" for i in range(15)))

    def _prediction(self, transcript, probs, top):
        segs = tuple(segment_tokens(transcript.tokens, transcript.subject_id))
        return TextPrediction("S7", segs, probs, float(np.mean(probs)), top)

    def test_single_span(self, transcript):
        pred = self._prediction(transcript, (0.1, 0.2, 0.9), (2,))
        report = render_highlights(pred, transcript)
        lines = report.splitlines()
        assert lines[0] == "Subject S7 (manual transcript)  p_t = 0.4000  -> HC"
        assert lines[1] == "Top segments:"
        assert lines[2] == "  1. [0.9000] w8 w9 w10 w11 w12 w13 w14"
        assert lines[-1].endswith("w7 >>> w8 w9 w10 w11 w12 w13 w14 <<<")

    def test_overlapping_spans_merge(self, transcript):
        pred = self._prediction(transcript, (0.8, 0.7, 0.1), (0, 1))
        body = render_highlights(pred, transcript).splitlines()[-1]
        assert body == ">>> w0 w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 <<< w11 w12 w13 w14"

    def test_disjoint_spans(self, transcript):
        pred = self._prediction(transcript, (0.8, 0.1, 0.7), (0, 2))
        body = render_highlights(pred, transcript).splitlines()[-1]
        assert body == ">>> w0 w1 w2 w3 w4 w5 w6 <<< w7 >>> w8 w9 w10 w11 w12 w13 w14 <<<"

    def test_label_uses_threshold(self, transcript):
        pred = self._prediction(transcript, (0.6, 0.6, 0.6), (0, 1, 2))
        assert render_highlights(pred, transcript).splitlines()[0].endswith("-> AD")

    def test_highlight_pairs(self, transcript):
        pred = self._prediction(transcript, (0.1, 0.2, 0.9), (2, 1))
        assert [p for _, p in highlight_top5(pred)] == [0.9, 0.2]


class TestGradients:
    def test_head(self, model, rng):
        xs = [rng.standard_normal((6, 6)), rng.standard_normal((6, 8)), rng.standard_normal((6, 8))]
        report = grad_check(
            lambda ts, tape: model.head(ts[0], ts[1], ts[2], mode="train", tape=tape),
            xs, model.head_layers(), check_inputs=True,
        )
        assert report.passed, str(report)

    def test_cnn_branch(self, model, rng):
        x = rng.standard_normal((2, 8, 12))
        report = grad_check(
            lambda ts, tape: model.cnn_from_matrix(ts[0], tape=tape), [x], model.cnn_layers(), check_inputs=True,
        )
        assert report.passed, str(report)

    def test_mini_encoder(self, rng):
        encoder = MiniEncoder("enc", vocab_size=20, dim=8, num_layers=1, heads=2, max_len=6, seed=0)
        ids = rng.integers(0, 20, size=(2, 6))
        mask = np.array([[True] * 6, [True] * 4 + [False] * 2])
        report = grad_check(lambda ts, tape: encoder.encode(ids, mask, tape), [], encoder.layers())
        assert report.passed, str(report)

    def test_encoder_rejects_long_input(self):
        encoder = MiniEncoder("enc", vocab_size=10, dim=8, num_layers=1, heads=2, max_len=4)
        with pytest.raises(ShapeError):
            encoder.encode(np.zeros((1, 5), dtype=int), np.ones((1, 5), dtype=bool))


class TestPersistence:
    def test_round_trip(self, model, transcripts, tmp_path):
        before = predict_transcript(model, transcripts[0])
        save_text_model(model, tmp_path / "text.adsw")
        loaded = load_text_model(tmp_path / "text.adsw")
        after = predict_transcript(loaded, transcripts[0])
        np.testing.assert_allclose(after.segment_probs, before.segment_probs, rtol=1e-6)
        assert loaded.config == model.config

    def test_rejects_audio_file(self, model, tmp_path):
        save_weights(tmp_path / "a.adsw", model.head_layers(), meta={"kind": "mvggish"})
        with pytest.raises(WeightFormatError):
            load_text_model(tmp_path / "a.adsw")

    def test_encoder_weights_transfer(self, model, vocab, wordvecs, tmp_path):
        save_text_model(model, tmp_path / "text.adsw")
        other = TextModel(TextModelConfig(seed=9, **TINY), vocab, wordvecs)
        load_encoder_weights(other, tmp_path / "text.adsw")
        np.testing.assert_array_equal(other.context.params["ctx.tok"]["weight"], model.context.params["ctx.tok"]["weight"])


class TestFileEmbedder:
    def test_file_round_trip(self, tmp_path):
        vectors = {("S1", -1): np.ones(3), ("S1", 4): np.arange(3.0)}
        dim, table = read_embedding_file(write_embedding_file(tmp_path / "e.bin", vectors))
        assert dim == 3
        np.testing.assert_array_equal(table[("S1", 4)], [0, 1, 2])

    def test_model_with_precomputed_embeddings(self, transcripts, vocab, wordvecs, tmp_path, rng):
        vectors = {}
        for t in transcripts:
            vectors[(t.subject_id, SENTENCE_START)] = rng.standard_normal(5)
            for seg in segment_tokens(t.tokens, t.subject_id):
                vectors[(t.subject_id, seg.start)] = rng.standard_normal(5)
        path = write_embedding_file(tmp_path / "emb.bin", vectors)
        cfg = TextModelConfig(embedder="file", embedding_file=str(path), **TINY)
        model = TextModel(cfg, vocab, wordvecs)
        assert model.concat_dim == 6 + 5 + 5
        assert model.context_layers() == []
        pred = predict_transcript(model, transcripts[0])
        assert 0 < pred.p_t < 1

    def test_missing_key_names_transcript(self, tmp_path):
        embedder = FileEmbedder(write_embedding_file(tmp_path / "e.bin", {("S1", -1): np.ones(2)}))
        with pytest.raises(EmbeddingKeyError, match="S2"):
            embedder.lookup(("S2", 0))


class _FakeSentenceModel:
    def __init__(self):
        self.calls = 0

    def get_sentence_embedding_dimension(self):
        return 4

    def encode(self, texts, convert_to_numpy=True, show_progress_bar=False):
        self.calls += 1
        return np.array([[len(t), t.count(" "), 1.0, 0.0] for t in texts], dtype=np.float32) / 100.0


class TestSentenceTransformerEmbedder:
    @pytest.fixture
    def fake(self, monkeypatch):
        fake = _FakeSentenceModel()
        monkeypatch.setitem(shared_encoder._encoders, "fake-mini", fake)
        return fake

    def test_shared_instance(self, fake):
        assert shared_encoder.get_encoder("fake-mini") is fake
        embedder = SentenceTransformerEmbedder("fake-mini")
        assert embedder.dim == 4
        assert embedder.layers() == []

    def test_model_with_sbert_branches(self, fake, transcripts, vocab, wordvecs):
        cfg = TextModelConfig(embedder="sbert", sbert_model="fake-mini", **TINY)
        model = TextModel(cfg, vocab, wordvecs)
        assert model.concat_dim == 6 + 4 + 4
        assert model.context_layers() == [] and model.sentence_layers() == []
        pred = predict_transcript(model, transcripts[0])
        assert 0 < pred.p_t < 1
        assert fake.calls >= 2

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from audio.io import AudioClip, write_wav
from core.tensor import Tensor
from core.weights import load_weights
from memory.embedding_cache import SentenceEmbeddingCache
from memory.feature_cache import DenoiseSettings, FeatureCache


def _clip(tmp_path, seconds=1.0, seed=0, name="clip.wav"):
    rng = np.random.default_rng(seed)
    samples = 0.1 * rng.standard_normal(int(16000 * seconds))
    return write_wav(tmp_path / name, AudioClip(samples, 16000, "c"))


class TestFeatureCache:
    def test_second_request_is_a_hit(self, tmp_path):
        wav = _clip(tmp_path)
        cache = FeatureCache(tmp_path / "cache")
        first = cache.get(wav)
        second = cache.get(wav)
        assert (cache.misses, cache.hits) == (1, 1)
        assert first.shape[1] == 64
        np.testing.assert_array_equal(first.data, second.data)
        assert cache.entry_path(wav).is_file()

    def test_entry_layout(self, tmp_path):
        wav = _clip(tmp_path)
        cache = FeatureCache(tmp_path / "cache")
        frames = cache.get(wav)
        stored = load_weights(cache.entry_path(wav)).layer("logmel")
        assert list(stored) == ["logmel"]
        np.testing.assert_array_equal(stored["logmel"], frames.data)

    def test_cache_survives_a_new_instance(self, tmp_path):
        wav = _clip(tmp_path)
        FeatureCache(tmp_path / "cache").get(wav)
        again = FeatureCache(tmp_path / "cache")
        again.get(wav)
        assert (again.misses, again.hits) == (0, 1)

    def test_changed_source_is_recomputed(self, tmp_path):
        wav = _clip(tmp_path, seconds=1.0)
        cache = FeatureCache(tmp_path / "cache")
        before = cache.get(wav)
        _clip(tmp_path, seconds=0.5, seed=1)
        after = cache.get(wav)
        assert cache.misses == 2
        assert after.shape[0] < before.shape[0]

    def test_touched_source_is_recomputed(self, tmp_path):
        wav = _clip(tmp_path)
        cache = FeatureCache(tmp_path / "cache")
        cache.get(wav)
        st = os.stat(wav)
        os.utime(wav, ns=(st.st_atime_ns, st.st_mtime_ns + 5_000_000_000))
        cache.get(wav)
        assert cache.misses == 2

    def test_denoise_settings_key_the_entry(self, tmp_path):
        wav = _clip(tmp_path)
        plain = FeatureCache(tmp_path / "cache")
        denoised = FeatureCache(tmp_path / "cache", DenoiseSettings(enabled=True))
        assert plain.entry_path(wav) != denoised.entry_path(wav)
        assert plain.entry_path(wav) == FeatureCache(tmp_path / "cache").entry_path(wav)
        plain.get(wav)
        denoised.get(wav)
        assert denoised.misses == 1

    def test_corrupt_entry_is_rebuilt(self, tmp_path):
        wav = _clip(tmp_path)
        cache = FeatureCache(tmp_path / "cache")
        expected = cache.get(wav).data
        cache.entry_path(wav).write_bytes(b"not a container")
        np.testing.assert_array_equal(cache.get(wav).data, expected)
        assert cache.misses == 2

    def test_concurrent_requests_compute_once(self, tmp_path):
        wav = _clip(tmp_path)
        cache = FeatureCache(tmp_path / "cache")
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(lambda _: cache.get(wav), range(8)))
        assert cache.misses == 1
        assert cache.hits == 7
        for r in results[1:]:
            np.testing.assert_array_equal(r.data, results[0].data)

    def test_clear(self, tmp_path):
        cache = FeatureCache(tmp_path / "cache")
        cache.get(_clip(tmp_path, name="a.wav"))
        cache.get(_clip(tmp_path, name="b.wav", seed=2))
        assert cache.clear() == 2
        assert cache.clear() == 0


class _CountingEncoder:
    def __init__(self):
        self.seen = []

    def __call__(self, ids):
        self.seen.extend(ids)
        return Tensor(np.array([[float(len(i)), float(ord(i[0]))] for i in ids]))


class TestSentenceEmbeddingCache:
    def test_each_transcript_encoded_once(self):
        encoder = _CountingEncoder()
        cache = SentenceEmbeddingCache(encoder)
        table = cache.get_many(["a", "bb", "a", "a"])
        assert table.shape == (4, 2)
        np.testing.assert_array_equal(table[0], table[2])
        cache.get_many(["bb", "a"])
        assert cache.encoder_calls == 2
        assert encoder.seen == ["a", "bb"]
        assert len(cache) == 2 and "bb" in cache

    def test_vectors_are_read_only(self):
        cache = SentenceEmbeddingCache(_CountingEncoder())
        vec = cache.get("a")
        with pytest.raises(ValueError):
            vec[0] = 5.0

    def test_put_skips_encoder(self):
        encoder = _CountingEncoder()
        cache = SentenceEmbeddingCache(encoder)
        cache.put("a", np.array([9.0, 9.0]))
        np.testing.assert_array_equal(cache.get("a"), [9.0, 9.0])
        assert cache.encoder_calls == 0

    def test_discard_and_invalidate(self):
        cache = SentenceEmbeddingCache(_CountingEncoder())
        cache.get_many(["a", "b"])
        cache.discard("a")
        cache.discard("missing")
        assert "a" not in cache and "b" in cache
        cache.get("a")
        assert cache.encoder_calls == 3
        cache.invalidate()
        assert len(cache) == 0
        cache.get("b")
        assert cache.encoder_calls == 4

import numpy as np
import pytest

from audio.features import (
    FFT_LENGTH,
    HOP_LENGTH,
    LOG_OFFSET,
    NUM_MEL_BINS,
    WINDOW_LENGTH,
    logmel_spectrogram,
    mel_filterbank,
    num_frames,
    partition_patches,
    periodic_hann,
    stft_magnitude,
)
from audio.io import AudioClip
from core.errors import AudioFormatError
from core.tensor import Tensor


class TestFrontEnd:
    def test_frame_count(self):
        assert num_frames(16000) == 98
        assert num_frames(400) == 1

    def test_silence_is_log_offset(self):
        spec = logmel_spectrogram(AudioClip(np.zeros(16000), 16000))
        assert spec.shape == (98, NUM_MEL_BINS)
        np.testing.assert_allclose(spec.data, np.log(LOG_OFFSET), rtol=1e-6)

    def test_requires_16k(self):
        with pytest.raises(AudioFormatError, match="16000"):
            logmel_spectrogram(AudioClip(np.zeros(8000), 8000))

    def test_too_short(self):
        with pytest.raises(AudioFormatError):
            stft_magnitude(np.zeros(WINDOW_LENGTH - 1))

    def test_stft_matches_brute_force_dft(self, rng):
        x = rng.standard_normal(WINDOW_LENGTH + 3 * HOP_LENGTH)
        mag = stft_magnitude(x)
        frame = 2
        seg = x[frame * HOP_LENGTH:frame * HOP_LENGTH + WINDOW_LENGTH] * periodic_hann(WINDOW_LENGTH)
        n = np.arange(WINDOW_LENGTH)
        for k in (0, 7, 100, FFT_LENGTH // 2):
            dft = np.sum(seg * np.exp(-2j * np.pi * k * n / FFT_LENGTH))
            assert mag[frame, k] == pytest.approx(abs(dft), rel=1e-9, abs=1e-9)

    def test_periodic_hann_overlap_adds_to_one(self):
        w = periodic_hann(WINDOW_LENGTH)
        half = WINDOW_LENGTH // 2
        np.testing.assert_allclose(w[:half] + w[half:], 1.0)

    def test_filterbank_shape(self):
        fb = mel_filterbank()
        assert fb.shape == (FFT_LENGTH // 2 + 1, NUM_MEL_BINS)
        assert np.all(fb >= 0)
        assert np.all(fb[0] == 0)
        assert np.all(fb.max(axis=0) > 0)

    def test_tone_peaks_in_matching_band(self):
        t = np.arange(16000) / 16000
        spec = logmel_spectrogram(AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t), 16000))
        expected = int(np.argmax(mel_filterbank()[1000 * FFT_LENGTH // 16000]))
        assert abs(int(np.argmax(spec.data.mean(axis=0))) - expected) <= 1


class TestPatches:
    def test_tail_dropped(self):
        spec = Tensor(np.arange(250 * 64, dtype=np.float32).reshape(250, 64))
        patches = partition_patches(spec, 96, clip_id="c")
        assert [p.start for p in patches] == [0, 96]
        assert all(p.k == 96 and p.clip_id == "c" for p in patches)
        np.testing.assert_array_equal(patches[1].frames.data, spec.data[96:192])

    def test_short_spectrogram_gives_no_patches(self):
        assert partition_patches(Tensor(np.zeros((95, 64))), 96) == []

    def test_long_patches(self):
        assert len(partition_patches(Tensor(np.zeros((1000, 64))), 496)) == 2

    def test_wrong_band_count(self):
        with pytest.raises(AudioFormatError):
            partition_patches(Tensor(np.zeros((200, 40))), 96)

    @pytest.mark.parametrize("k", [0, -1])
    def test_non_positive_patch_length(self, k):
        with pytest.raises(AudioFormatError, match="at least one frame"):
            partition_patches(Tensor(np.zeros((200, 64))), k)

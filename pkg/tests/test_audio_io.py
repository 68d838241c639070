import numpy as np
import pytest
import soundfile as sf

from audio.io import AudioClip, load_wav, resample, write_wav
from core.errors import AudioFormatError


def _tone(freq, rate, seconds, amp=0.5):
    t = np.arange(int(rate * seconds)) / rate
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.float32)


class TestAudioClip:
    def test_rejects_empty(self):
        with pytest.raises(AudioFormatError):
            AudioClip(np.zeros(0), 16000)

    def test_rejects_stereo_array(self):
        with pytest.raises(AudioFormatError):
            AudioClip(np.zeros((10, 2)), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(AudioFormatError):
            AudioClip(np.zeros(10), 0)

    def test_duration(self):
        assert AudioClip(np.zeros(8000), 16000).duration == 0.5


class TestWavIO:
    def test_pcm16_round_trip(self, tmp_path):
        clip = AudioClip(_tone(440, 16000, 0.25), 16000, "tone")
        loaded = load_wav(write_wav(tmp_path / "tone.wav", clip))
        assert loaded.sample_rate == 16000
        assert loaded.clip_id == "tone"
        np.testing.assert_allclose(loaded.samples, clip.samples, atol=1.0 / 32768 + 1e-6)

    def test_stereo_is_averaged(self, tmp_path):
        left = np.full(1000, 0.5, dtype=np.float32)
        right = np.full(1000, -0.25, dtype=np.float32)
        path = tmp_path / "stereo.wav"
        sf.write(str(path), np.stack([left, right], axis=1), 8000, subtype="FLOAT", format="WAV")
        clip = load_wav(path)
        np.testing.assert_allclose(clip.samples, 0.125, atol=1e-7)

    def test_rejects_non_wav_container(self, tmp_path):
        path = tmp_path / "tone.flac"
        sf.write(str(path), _tone(440, 16000, 0.1), 16000, format="FLAC")
        with pytest.raises(AudioFormatError, match="not WAV"):
            load_wav(path)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"this is not audio at all" * 10)
        with pytest.raises(AudioFormatError):
            load_wav(path)

    def test_rejects_truncated_file(self, tmp_path):
        path = write_wav(tmp_path / "tone.wav", AudioClip(_tone(440, 16000, 0.5), 16000))
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(AudioFormatError):
            load_wav(path)


class TestResample:
    def test_output_length(self):
        clip = AudioClip(_tone(440, 44100, 1.0), 44100)
        assert len(resample(clip, 16000)) == 16000

    def test_same_rate_is_identity(self):
        clip = AudioClip(_tone(440, 16000, 0.1), 16000)
        assert resample(clip, 16000) is clip

    def test_tone_survives(self):
        out = resample(AudioClip(_tone(440, 48000, 1.0), 48000), 16000)
        expected = _tone(440, 16000, 1.0)
        inner = slice(200, -200)
        np.testing.assert_allclose(out.samples[inner], expected[inner], atol=1e-2)

import pytest

from core.config import RunConfig, load_config_file
from core.errors import ConfigError


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.folds == 10
        assert cfg.threshold == 0.5
        assert cfg.fusion_weights == (0.0, 1.0, 1.5, 2.0, 1e14)
        assert cfg.patch_frames == 96

    def test_every_key_documented(self):
        docs = RunConfig.docs()
        assert set(docs) == set(RunConfig().as_dict())
        assert all(docs.values())

    def test_long_segment(self):
        assert RunConfig(segment="long").patch_frames == 496

    def test_invalid_choice(self):
        with pytest.raises(ConfigError, match="segment"):
            RunConfig(segment="medium")

    def test_negative_fusion_weight(self):
        with pytest.raises(ConfigError):
            RunConfig(fusion_weights=(1.0, -0.5))

    def test_synth_duration_positive(self):
        with pytest.raises(ConfigError, match="synth_duration"):
            RunConfig(synth_duration=0.0)

    @pytest.mark.parametrize(("source", "denoise", "expected"), [
        ("manual", "auto", False), ("asr", "auto", True), ("manual", "on", True), ("asr", "off", False),
    ])
    def test_denoise_resolution(self, source, denoise, expected):
        assert RunConfig(source=source, denoise=denoise).use_denoise is expected

    def test_speaker_filter_resolution(self):
        assert RunConfig(source="manual").participant_only
        assert not RunConfig(source="asr").participant_only
        assert not RunConfig(source="manual", speaker_filter="all").participant_only

    def test_hash_tracks_values(self):
        assert RunConfig().config_hash() == RunConfig().config_hash()
        assert RunConfig().config_hash() != RunConfig(seed=1).config_hash()


class TestConfigSources:
    def test_precedence(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("seed = 3\nfolds = 4\ntext_lr = 0.01\n")
        cfg = RunConfig.from_sources(
            path, environ={"ADSCREEN_FOLDS": "5"}, overrides={"seed": 9, "jobs": None}
        )
        assert (cfg.seed, cfg.folds, cfg.text_lr, cfg.jobs) == (9, 5, 0.01, 1)

    def test_include(self, tmp_path):
        (tmp_path / "base.env").write_text("folds = 3\nsegment = long\n")
        (tmp_path / "top.env").write_text("include = base.env\nfolds = 6\n")
        cfg = RunConfig.from_sources(tmp_path / "top.env", environ={})
        assert cfg.folds == 6
        assert cfg.segment == "long"

    def test_include_cycle(self, tmp_path):
        (tmp_path / "a.env").write_text("include = b.env\n")
        (tmp_path / "b.env").write_text("include = a.env\n")
        with pytest.raises(ConfigError, match="cycle"):
            load_config_file(tmp_path / "a.env")

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("learning_rate = 0.1\n")
        with pytest.raises(ConfigError, match="learning_rate"):
            RunConfig.from_sources(path, environ={})

    def test_unknown_env_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_sources(environ={"ADSCREEN_BOGUS": "1"})

    def test_value_coercion(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("fusion_weights = 0,2,1e14\nfreeze_cnn = yes\ncnn_widths = 3,5\n")
        cfg = RunConfig.from_sources(path, environ={})
        assert cfg.fusion_weights == (0.0, 2.0, 1e14)
        assert cfg.freeze_cnn is True
        assert cfg.cnn_widths == (3, 5)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("folds = many\n")
        with pytest.raises(ConfigError, match="folds"):
            RunConfig.from_sources(path, environ={})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.from_sources(tmp_path / "absent.env", environ={})

    def test_resolved_text_round_trips(self, tmp_path):
        cfg = RunConfig(seed=4, segment="long", freeze_cnn=True)
        path = tmp_path / "resolved.env"
        path.write_text(cfg.to_env_text())
        assert RunConfig.from_sources(path, environ={}) == cfg

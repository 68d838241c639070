import logging

import pytest

from adscreen import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_parser, main, resolve_config
from corpus.manifest import ingest_manifest, write_manifest


@pytest.fixture(autouse=True)
def _restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    for handler in handlers:
        if handler not in root.handlers:
            root.addHandler(handler)
    root.setLevel(level)


def _out(tmp_path):
    return ["--out", str(tmp_path / "run"), "--quiet"]


class TestResolveConfig:
    def test_environment_then_flags(self, monkeypatch):
        monkeypatch.setenv("ADSCREEN_SEED", "9")
        parser = build_parser()
        assert resolve_config(parser.parse_args(["synth"])).seed == 9
        assert resolve_config(parser.parse_args(["synth", "--seed", "4"])).seed == 4

    def test_weights_flag(self):
        args = build_parser().parse_args(["fuse", "--weights", "0, 1.5,1e14"])
        assert resolve_config(args).fusion_weights == (0.0, 1.5, 1e14)

    def test_duration_flag(self):
        parser = build_parser()
        assert resolve_config(parser.parse_args(["synth"])).synth_duration == 10.0
        assert resolve_config(parser.parse_args(["synth", "--duration", "6.5"])).synth_duration == 6.5

    def test_unknown_command_is_rejected_by_argparse(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["bogus"])
        assert exc.value.code == 2


class TestExitCodes:
    def test_synth(self, tmp_path):
        assert main(["synth", "--n-subjects", "4", "--seed", "3", *_out(tmp_path)]) == EXIT_OK
        manifest = ingest_manifest(tmp_path / "run" / "manifest.csv")
        assert len(manifest) == 4
        assert (tmp_path / "run" / "run.log").is_file()
        assert (tmp_path / "run" / "config.resolved.env").is_file()

    def test_missing_manifest(self, tmp_path):
        assert main(["features", *_out(tmp_path)]) == EXIT_USAGE

    def test_invalid_manifest(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("subject_id,label,age,gender,audio_path\nS1,MCI,70,female,a.wav\n")
        assert main(["features", "--manifest", str(bad), *_out(tmp_path)]) == EXIT_USAGE

    def test_bad_weights(self, tmp_path):
        assert main(["fuse", "--weights", "a,b", *_out(tmp_path)]) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        args = ["evaluate", "--config", str(tmp_path / "none.env"), *_out(tmp_path)]
        assert main(args) == EXIT_USAGE

    def test_single_class_training_fails(self, tmp_path, small_corpus):
        healthy = [r for r in small_corpus.records if r.label == 0]
        manifest = write_manifest(tmp_path / "hc.csv", healthy)
        args = ["train-text", "--manifest", str(manifest), *_out(tmp_path)]
        assert main(args) == EXIT_FAILURE

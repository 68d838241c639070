import numpy as np
import pytest

from audio.model import build_mvggish
from audio.train import AudioTrainSettings, PatchDataset, train_audio
from core.config import RunConfig
from core.errors import ShapeError, TrainingError
from core.tensor import LayerParams
from core.training import EarlyStopping, TrainingHistory, minibatches, require_two_classes, split_validation


def _patch_dataset(rng, subjects_per_class=4, patches_per_subject=5, frames=16):
    patches, labels, groups = [], [], []
    for label in (0, 1):
        for s in range(subjects_per_class):
            for _ in range(patches_per_subject):
                x = rng.standard_normal((frames, 64)) * 0.5
                # AD patches carry energy in the upper bands
                x[:, 32:] += 2.0 if label else -2.0
                patches.append(x)
                labels.append(label)
                groups.append(f"{'AD' if label else 'HC'}{s}")
    return PatchDataset(np.stack(patches), np.array(labels), np.array(groups))


class TestEarlyStopping:
    def test_stops_after_patience_and_keeps_best(self):
        layer = LayerParams("w", {"weight": np.zeros(1)})
        stopper = EarlyStopping(patience=2)
        stopped = []
        for epoch, loss in enumerate([1.0, 0.5, 0.6, 0.7, 0.4]):
            layer.arrays["weight"][...] = epoch
            if stopper.update(epoch, loss, [layer]):
                stopped.append(epoch)
                break
        assert stopped == [3]
        assert stopper.best_epoch == 1
        stopper.restore_best([layer])
        assert layer["weight"][0] == 1.0

    def test_zero_patience_stops_on_first_regression(self):
        stopper = EarlyStopping(patience=0)
        assert not stopper.update(0, 1.0, [])
        assert stopper.update(1, 1.0, [])


class TestSplitValidation:
    def test_subject_disjoint_and_stratified(self):
        groups = np.repeat([f"s{i}" for i in range(20)], 3)
        labels = np.repeat([0] * 10 + [1] * 10, 3)
        train, val = split_validation(groups, labels, 0.2, seed=0)
        assert set(groups[train]).isdisjoint(groups[val])
        assert len(set(groups[val])) == 4
        assert sorted(set(labels[val].tolist())) == [0, 1]
        assert len(train) + len(val) == len(groups)

    def test_keeps_one_subject_per_class_in_training(self):
        groups = np.array(["a", "b"])
        labels = np.array([0, 1])
        train, val = split_validation(groups, labels, 0.9, seed=0)
        assert len(val) == 0 and len(train) == 2

    def test_seeded(self):
        groups = np.array([f"s{i}" for i in range(30)])
        labels = np.array([i % 2 for i in range(30)])
        a = split_validation(groups, labels, 0.3, seed=4)
        b = split_validation(groups, labels, 0.3, seed=4)
        np.testing.assert_array_equal(a[1], b[1])


class TestHelpers:
    def test_minibatches_cover_everything(self, rng):
        batches = list(minibatches(10, 4, rng))
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    def test_require_two_classes(self):
        with pytest.raises(TrainingError):
            require_two_classes([1, 1, 1], "x")
        require_two_classes([0, 1], "x")

    def test_history_csv(self, tmp_path):
        history = TrainingHistory()
        history.append(0, 0.7, 0.8)
        history.append(1, 0.5, 0.6)
        path = history.write_csv(tmp_path / "h.csv")
        assert path.read_text().splitlines()[0] == "epoch,train_loss,val_loss"


class TestAudioTraining:
    def test_settings_from_config(self):
        cfg = RunConfig(audio_lr=0.01, audio_batch=8, audio_patience=3, seed=2)
        s = AudioTrainSettings.from_config(cfg)
        assert (s.lr, s.batch_size, s.patience, s.seed) == (0.01, 8, 3, 2)

    def test_dataset_lengths_checked(self):
        with pytest.raises(ShapeError):
            PatchDataset(np.zeros((3, 16, 64)), np.zeros(2), np.array(["a", "b", "c"]))

    def test_single_class_rejected(self, rng):
        data = _patch_dataset(rng)
        only_ad = data.subset(np.flatnonzero(data.labels == 1))
        with pytest.raises(TrainingError):
            train_audio(build_mvggish(seed=0, width_divisor=32), only_ad, AudioTrainSettings(epochs=1))

    def test_loss_decreases(self, rng):
        data = _patch_dataset(rng)
        settings = AudioTrainSettings(lr=3e-3, batch_size=8, epochs=10, patience=10, val_fraction=0.25, seed=0)
        _, history = train_audio(build_mvggish(seed=0, width_divisor=16), data, settings)
        assert len(history.epochs) <= 10
        assert history.train_loss[-1] < history.train_loss[0]
        assert history.best_epoch is not None and history.best_epoch >= 0

    def test_frozen_backbone_keeps_conv_weights(self, rng):
        data = _patch_dataset(rng)
        model = build_mvggish(seed=0, width_divisor=16)
        conv_before = model.layers["conv3"]["weight"].copy()
        running_before = model.layers["bn3"]["running_mean"].copy()
        fc_before = model.layers["fc2"]["weight"].copy()
        settings = AudioTrainSettings(lr=1e-2, batch_size=8, epochs=2, patience=5, freeze_backbone=True)
        train_audio(model, data, settings)
        np.testing.assert_array_equal(model.layers["conv3"]["weight"], conv_before)
        np.testing.assert_array_equal(model.layers["bn3"]["running_mean"], running_before)
        assert not np.array_equal(model.layers["fc2"]["weight"], fc_before)

import numpy as np
import pytest

from core.errors import WeightFormatError
from core.tensor import LayerParams
from core.weights import load_weights, save_weights


@pytest.fixture
def layers(rng):
    return [
        LayerParams("conv1", {"weight": rng.standard_normal((3, 3, 1, 4)).astype(np.float32),
                              "bias": np.zeros(4, dtype=np.float32)}),
        LayerParams("bn1", {"gamma": np.ones(4, dtype=np.float64), "running_var": np.full(4, 2.0)}),
    ]


class TestWeightContainer:
    def test_float32_arrays_are_bit_exact(self, tmp_path, layers):
        path = save_weights(tmp_path / "m.adsw", layers, meta={"kind": "audio", "widths": [64, 128]})
        loaded = load_weights(path)
        np.testing.assert_array_equal(loaded.layer("conv1")["weight"], layers[0]["weight"])
        assert loaded.layer("conv1")["weight"].dtype == np.float32
        assert loaded.layer("bn1")["gamma"].dtype == np.float64
        assert loaded.meta == {"kind": "audio", "widths": [64, 128]}

    def test_names_in_layer_order(self, tmp_path, layers):
        loaded = load_weights(save_weights(tmp_path / "m.adsw", layers))
        assert loaded.names() == ["conv1/weight", "conv1/bias", "bn1/gamma", "bn1/running_var"]

    def test_missing_layer_is_empty(self, tmp_path, layers):
        loaded = load_weights(save_weights(tmp_path / "m.adsw", layers))
        assert loaded.layer("fc9") == {}

    def test_no_temp_file_left(self, tmp_path, layers):
        save_weights(tmp_path / "m.adsw", layers)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["m.adsw"]

    def test_bad_tag(self, tmp_path):
        path = tmp_path / "bad.adsw"
        path.write_bytes(b"NOPE/1 2\n{}")
        with pytest.raises(WeightFormatError, match="tag"):
            load_weights(path)

    def test_truncated_payload(self, tmp_path, layers):
        path = save_weights(tmp_path / "m.adsw", layers)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(WeightFormatError, match="truncated"):
            load_weights(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(WeightFormatError):
            load_weights(tmp_path / "absent.adsw")

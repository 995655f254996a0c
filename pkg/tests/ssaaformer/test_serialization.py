# tests/ssaaformer/test_serialization.py
"""SSAF model files."""
import numpy as np
import pytest

from deepfidelity.errors import FormatError
from deepfidelity.ssaaformer import ModelConfig, load_model, model_init, save_model
from deepfidelity.tensor import Tensor


@pytest.fixture
def trained_like():
    """Tiny model with perturbed weights and statistics."""
    model = model_init(ModelConfig.tiny(seed=123_456_789))
    rng = np.random.default_rng(0)
    for param in model.parameters():
        param.data[...] = rng.standard_normal(param.shape)
    for stats in model.buffers.values():
        stats.mean[...] = rng.standard_normal(stats.mean.shape)
        stats.var[...] = rng.uniform(0.5, 2.0, stats.var.shape)
    return model


def test_round_trip_is_bitwise(trained_like, tmp_path):
    """Test save then load."""
    path = save_model(trained_like, tmp_path / "model.ssaf")
    loaded = load_model(path)
    assert loaded.config == trained_like.config
    assert loaded.config.seed == 123_456_789
    original = trained_like.state_dict()
    for name, array in loaded.state_dict().items():
        np.testing.assert_array_equal(array, original[name])
    assert loaded.checksum() == trained_like.checksum()


def test_loaded_model_predicts_identically(trained_like, tmp_path):
    """Test equal scores of the saved and the loaded model."""
    loaded = load_model(save_model(trained_like, tmp_path / "model.ssaf"))
    images = Tensor(np.random.default_rng(1).standard_normal((2, 3, 16, 16)))
    np.testing.assert_array_equal(
        loaded.eval().forward(images)[1].data, trained_like.eval().forward(images)[1].data
    )


def test_scalar_ssaa_weights_round_trip(tmp_path):
    """Test a desk model whose SSAA blocks hold zero dimensional weights."""
    model = model_init(ModelConfig.desk())
    model.params["stage1.block0.ssaa.w2"].data[...] = 0.25
    loaded = load_model(save_model(model, tmp_path / "model.ssaf"))
    assert loaded.params["stage1.block0.ssaa.w1"].shape == ()
    assert float(loaded.params["stage1.block0.ssaa.w2"].data) == 0.25
    assert loaded.checksum() == model.checksum()


def test_double_precision_model_stored_as_single(tmp_path):
    """Test that float64 models come back as their float32 rounding."""
    model = model_init(ModelConfig.tiny(), dtype=np.float64)
    loaded = load_model(save_model(model, tmp_path / "model.ssaf"))
    name = "stage1.block0.dw.weight"
    np.testing.assert_array_equal(
        loaded.params[name].data, model.params[name].data.astype(np.float32)
    )


def test_bad_magic(trained_like, tmp_path):
    """Test a corrupt magic."""
    path = save_model(trained_like, tmp_path / "model.ssaf")
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="magic"):
        load_model(path)


def test_bad_version(trained_like, tmp_path):
    """Test an unknown version number."""
    path = save_model(trained_like, tmp_path / "model.ssaf")
    data = bytearray(path.read_bytes())
    data[4] = 9
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="version"):
        load_model(path)


def test_truncated_file_names_tensor(trained_like, tmp_path):
    """Test a file cut in the middle of a tensor."""
    path = save_model(trained_like, tmp_path / "model.ssaf")
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError, match="truncated") as info:
        load_model(path)
    assert info.value.tensor_name is not None
    assert info.value.tensor_name in str(info.value)


def test_flipped_payload_byte(trained_like, tmp_path):
    """Test the checksum."""
    path = save_model(trained_like, tmp_path / "model.ssaf")
    data = bytearray(path.read_bytes())
    data[-8] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="checksum"):
        load_model(path)


def test_trailing_bytes(trained_like, tmp_path):
    """Test garbage after the checksum."""
    path = save_model(trained_like, tmp_path / "model.ssaf")
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        load_model(path)


def test_missing_file(tmp_path):
    """Test that a missing file is an I/O error."""
    with pytest.raises(OSError):
        load_model(tmp_path / "absent.ssaf")

# tests/pipeline/test_visualize.py
"""Feature map dumps."""
import numpy as np
import pytest
from PIL import Image

from deepfidelity.errors import DomainError
from deepfidelity.pipeline.images import write_pixels
from deepfidelity.pipeline.visualize import channel_mean_map, dump_feature_maps
from deepfidelity.ssaaformer import ModelConfig, model_init


def _gray(path):
    with Image.open(path) as image:
        return np.asarray(image, dtype=np.int64)


def _symmetrize(param):
    param.data[...] = 0.5 * (param.data + param.data[..., ::-1])


def test_dump_file_names(tiny_model, rng, tmp_path):
    """Test one file per requested block."""
    image = rng.standard_normal((3, 16, 16)).astype(np.float32)
    paths = dump_feature_maps(tiny_model, image, tmp_path, 3)
    assert [path.name for path in paths] == [
        "block00_stage1.png",
        "block01_stage2.png",
        "block02_stage3.png",
    ]
    assert _gray(paths[0]).shape == (4, 4)


def test_dump_from_image_file(tiny_model, rng, tmp_path):
    """Test reading the input from disk."""
    path = write_pixels(rng.uniform(0.0, 1.0, (3, 20, 20)), tmp_path / "face.png")
    assert len(dump_feature_maps(tiny_model, path, tmp_path / "maps", 1)) == 1


def test_constant_input_gives_mid_gray(tmp_path):
    """Test a constant map without spatial mixing."""
    model = model_init(ModelConfig.tiny())
    model.params["stage1.block0.dpe.weight"].data[...] = 0.0
    model.params["stage1.block0.dw.weight"].data[...] = 0.0
    (path,) = dump_feature_maps(model, np.full((3, 16, 16), 0.3, np.float32), tmp_path, 1)
    assert (_gray(path) == 128).all()


def test_constant_input_with_padding_shows_borders(tmp_path):
    """Test that zero padding marks the borders of a constant image."""
    model = model_init(ModelConfig.tiny())
    (path,) = dump_feature_maps(model, np.full((3, 16, 16), 0.3, np.float32), tmp_path, 1)
    gray = _gray(path)
    assert gray.min() != gray.max()


def test_symmetric_input_gives_symmetric_map(rng, tmp_path):
    """Test mirror symmetry with mirror symmetric kernels."""
    model = model_init(ModelConfig.tiny(seed=3))
    for name in ("embed1.weight", "stage1.block0.dpe.weight", "stage1.block0.dw.weight"):
        _symmetrize(model.params[name])
    half = rng.standard_normal((3, 16, 8))
    image = np.concatenate([half, half[..., ::-1]], axis=-1).astype(np.float32)
    (path,) = dump_feature_maps(model, image, tmp_path, 1)
    gray = _gray(path)
    assert np.abs(gray - gray[:, ::-1]).max() <= 1


def test_channel_mean_map_scaling():
    """Test min-max scaling of the channel mean."""
    scaled = channel_mean_map(np.stack([np.arange(4.0).reshape(2, 2)] * 3))
    np.testing.assert_allclose(scaled, [[0.0, 1 / 3], [2 / 3, 1.0]])
    np.testing.assert_array_equal(channel_mean_map(np.ones((2, 3, 3))), np.full((3, 3), 0.5))


@pytest.mark.parametrize("n_blocks", [0, 5])
def test_block_count_out_of_range(tiny_model, tmp_path, n_blocks):
    """Test the accepted range of leading blocks."""
    with pytest.raises(DomainError):
        dump_feature_maps(tiny_model, np.zeros((3, 16, 16), np.float32), tmp_path, n_blocks)

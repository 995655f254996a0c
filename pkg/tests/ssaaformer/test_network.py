# tests/ssaaformer/test_network.py
"""Backbone layout, initialization and forward pass."""
import dataclasses

import numpy as np
import pytest

from deepfidelity.errors import ConfigurationError, DimensionError
from deepfidelity.pipeline.checks import MODEL_TOLERANCE, model_gradient_error
from deepfidelity.ssaaformer import ModelConfig, model_forward, model_init, parameter_layout
from deepfidelity.tensor import Tensor


def _tally(config):
    """Parameter count summed layer by layer."""
    channels = (config.in_channels,) + config.stage_channels
    e = config.ffn_expansion
    total = 0
    for stage, depth in enumerate(config.stage_depths, start=1):
        c_in, c = channels[stage - 1], channels[stage]
        kernel = 4 if stage == 1 else 3
        total += c * c_in * kernel * kernel + c + 2 * c
        for index in range(depth):
            dpe = c * config.dpe_kernel**2 + c
            ffn = (e * c * c + e * c) + (c * e * c + c)
            if stage <= 2:
                total += dpe + 2 * c + (c * c + c) + (c * config.dw_kernel**2 + c)
                total += (c * c + c) + 2 * c + ffn
                if stage == 1 and index < config.ssaa_blocks:
                    total += 2
            else:
                total += dpe + 2 * c + 4 * (c * c + c) + 2 * c + ffn
    return total + config.stage_channels[-1] + 1


@pytest.mark.parametrize(
    "config",
    [ModelConfig.desk(), ModelConfig.desk(ssaa_blocks=2), ModelConfig.tiny()],
    ids=["desk", "desk-ssaa2", "tiny"],
)
def test_parameter_count_matches_tally(config):
    """Test the parameter count against an independent tally."""
    assert model_init(config).parameter_count() == _tally(config)


def test_forward_shapes(desk_config):
    """Test embedding and score shapes."""
    model = model_init(desk_config).eval()
    images = Tensor(np.random.default_rng(0).standard_normal((3, 3, 32, 32)))
    embedding, score = model_forward(model, images)
    assert embedding.shape == (3, 128)
    assert score.shape == (3,)


def test_stage_resolutions(desk_config):
    """Test ``S/4, S/8, S/16, S/32`` feature maps."""
    model = model_init(desk_config).eval()
    images = Tensor(np.zeros((1, 3, 32, 32)))
    sizes = {block.stage: x.shape[-1] for block, x in model.forward_blocks(images)}
    assert sizes == {1: 8, 2: 4, 3: 2, 4: 1}
    assert desk_config.stage_sizes() == (8, 4, 2, 1)
    assert ModelConfig.tiny().stage_sizes() == (4, 2, 1, 1)


def test_wrong_input_size(tiny_model):
    """Test the dimension check of the input."""
    with pytest.raises(DimensionError):
        tiny_model.forward(Tensor(np.zeros((1, 3, 32, 32))))
    with pytest.raises(DimensionError):
        tiny_model.forward(Tensor(np.zeros((1, 1, 16, 16))))


def test_init_is_deterministic(tiny_config):
    """Test the checksum of two models with the same seed."""
    assert model_init(tiny_config).checksum() == model_init(tiny_config).checksum()
    other = dataclasses.replace(tiny_config, seed=tiny_config.seed + 1)
    assert model_init(other).checksum() != model_init(tiny_config).checksum()


def test_init_values(desk_config):
    """Test truncated normal weights and the SSAA starting point."""
    model = model_init(desk_config)
    weight = model.params["stage2.block0.pw1.weight"].data
    assert np.abs(weight).max() <= 0.04 + 1e-7
    assert 0.01 < weight.std() < 0.03
    assert not model.params["stage2.block0.pw1.bias"].data.any()
    for block in model.blocks[:5]:
        assert model.params[f"{block.prefix}ssaa.w1"].item() == 1.0
        assert model.params[f"{block.prefix}ssaa.w2"].item() == 0.0


def test_init_equals_baseline(desk_config):
    """Test that the untrained model equals the model without SSAA."""
    images = Tensor(np.random.default_rng(1).standard_normal((2, 3, 32, 32)))
    with_ssaa = model_init(desk_config).eval().forward(images)
    baseline = model_init(dataclasses.replace(desk_config, ssaa_blocks=0)).eval().forward(images)
    for ours, theirs in zip(with_ssaa, baseline):
        np.testing.assert_allclose(ours.data, theirs.data, atol=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_reduction_with_shared_weights(desk_config, seed):
    """Test perturbed shared weights with every ``w2 = 0``."""
    model = model_init(desk_config)
    baseline = model_init(dataclasses.replace(desk_config, ssaa_blocks=0))
    rng = np.random.default_rng(2 + seed)
    for name, param in baseline.params.items():
        param.data[...] = param.data + rng.normal(0.0, 0.05, param.shape)
        model.params[name].data[...] = param.data
    images = Tensor(np.random.default_rng(100 + seed).standard_normal((2, 3, 32, 32)))
    for ours, theirs in zip(model.eval().forward(images), baseline.eval().forward(images)):
        np.testing.assert_allclose(ours.data, theirs.data, atol=1e-6)


def test_training_mode_uses_batch_statistics(tiny_config):
    """Test that training mode updates the running statistics."""
    model = model_init(tiny_config).train()
    before = model.buffers["embed1.norm"].mean.copy()
    model.forward(Tensor(np.random.default_rng(4).standard_normal((2, 3, 16, 16))))
    assert not np.array_equal(model.buffers["embed1.norm"].mean, before)


@pytest.mark.parametrize("seed", [1, 42])
def test_end_to_end_gradient(seed):
    """Test the tiny backbone MSE gradient against finite differences."""
    assert model_gradient_error(seed=seed) < MODEL_TOLERANCE


@pytest.mark.parametrize(
    "overrides",
    [
        {"ssaa_blocks": 6},
        {"input_size": 40},
        {"stage_channels": (16, 32, 63, 128)},
        {"stage_depths": (5, 2, 2)},
        {"dw_kernel": 4},
        {"seed": -1},
    ],
)
def test_invalid_configs(overrides):
    """Test the configuration checks."""
    with pytest.raises(ConfigurationError):
        ModelConfig.desk(**overrides)


def test_full_preset_layout_matches_tally():
    """Test the full scale layout without allocating it."""
    config = ModelConfig.full()
    count = sum(int(np.prod(spec.shape)) for spec in parameter_layout(config))
    assert count == _tally(config)


def test_config_dict_round_trip(desk_config):
    """Test ``to_dict`` and ``from_dict``."""
    assert ModelConfig.from_dict(desk_config.to_dict()) == desk_config

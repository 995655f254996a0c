# tests/pipeline/test_training.py
"""Backbone training."""
import math

import numpy as np
import pytest

from deepfidelity.errors import ConfigurationError, DomainError
from deepfidelity.pipeline.manifest import map_quality
from deepfidelity.pipeline.synthetic import SynthConfig, gen_synthetic
from deepfidelity.pipeline.training import (
    TrainConfig,
    train_backbone,
    trainable_parameters,
    training_targets,
)
from deepfidelity.ssaaformer import ModelConfig, load_model, model_init


@pytest.fixture
def eight(small_dataset):
    """First eight mapped training records."""
    return small_dataset["train_records"][:8]


def test_one_epoch_gives_one_finite_loss(eight, tmp_path):
    """Test the loss history and the saved model."""
    result = train_backbone(
        eight,
        ModelConfig.tiny(),
        TrainConfig(epochs=1, batch_size=4),
        model_path=tmp_path / "model.ssaf",
        progress=False,
    )
    assert len(result.losses) == 1
    assert math.isfinite(result.losses[0])
    assert not result.model.training
    assert load_model(result.model_path).checksum() == result.model.checksum()


def test_zero_learning_rate_keeps_parameters(eight):
    """Test that lr = 0 and no decay leave every parameter untouched."""
    config = ModelConfig.tiny()
    result = train_backbone(
        eight, config, TrainConfig(epochs=2, batch_size=3, lr=0.0, weight_decay=0.0), progress=False
    )
    initial = model_init(config)
    for name, param in result.model.named_parameters():
        np.testing.assert_array_equal(param.data, initial.params[name].data)


def test_frozen_parameters_stay_fixed(eight):
    """Test the exclusion patterns."""
    config = ModelConfig.tiny()
    result = train_backbone(
        eight, config, TrainConfig(epochs=1, batch_size=4, frozen=("*.ssaa.*",)), progress=False
    )
    initial = model_init(config)
    changed = {
        name
        for name, param in result.model.named_parameters()
        if not np.array_equal(param.data, initial.params[name].data)
    }
    assert changed
    assert not any(".ssaa." in name for name in changed)
    names = [name for name, _ in initial.named_parameters()]
    kept = {id(param) for param in trainable_parameters(initial, ("*.ssaa.*", "head.*"))}
    assert {name for name in names if id(initial.params[name]) not in kept} == {
        "stage1.block0.ssaa.w1",
        "stage1.block0.ssaa.w2",
        "head.weight",
        "head.bias",
    }


def test_training_is_deterministic(eight):
    """Test equal seeds giving equal models, with flip augmentation."""
    config = TrainConfig(epochs=1, batch_size=4, hflip_augment=True)
    first = train_backbone(eight, ModelConfig.tiny(), config, progress=False)
    second = train_backbone(eight, ModelConfig.tiny(), config, progress=False)
    assert first.losses == second.losses
    assert first.model.checksum() == second.model.checksum()


def test_training_targets(make_records, small_dataset):
    """Test binary and fidelity targets."""
    records = make_records([("real", 1.0), ("fake", 2.0)])
    np.testing.assert_array_equal(training_targets(records, "binary"), [1.0, 0.0])
    with pytest.raises(DomainError, match="map the manifest"):
        training_targets(records, "fidelity")
    mapped = small_dataset["train_records"]
    targets = training_targets(mapped)
    assert ((targets >= 0) & (targets <= 1)).all()
    with pytest.raises(ConfigurationError):
        training_targets(records, "labels")


def test_training_without_records():
    """Test an empty training set."""
    with pytest.raises(DomainError):
        train_backbone([], ModelConfig.tiny(), progress=False)


@pytest.mark.parametrize(
    "overrides",
    [{"epochs": 0}, {"batch_size": 0}, {"lr": -1.0}, {"weight_decay": -0.1},
     {"target_mode": "soft"}, {"seed": -1}, {"workers": 0}],
)
def test_invalid_train_config(overrides):
    """Test the optimization settings checks."""
    with pytest.raises(ConfigurationError):
        TrainConfig(**overrides)


@pytest.mark.slow
def test_desk_training_halves_the_loss(tmp_path):
    """Test ten epochs on 200 generated desk images."""
    manifest = gen_synthetic(SynthConfig(n_real=100, n_fake=100, seed=42), tmp_path, progress=False)
    records, _ = map_quality(manifest, tmp_path / "mapped.csv")
    result = train_backbone(records, ModelConfig.desk(), TrainConfig(epochs=10), progress=False)
    assert len(result.losses) == 10
    assert result.losses[-1] < 0.5 * result.losses[0]

# tests/conftest.py
"""Shared fixtures: seeded generators, model presets and a small dataset."""
import numpy as np
import pytest

from deepfidelity.fidelity import FidelityRecord, Label
from deepfidelity.pipeline.manifest import map_quality
from deepfidelity.pipeline.synthetic import SynthConfig, gen_synthetic, split_manifest
from deepfidelity.seeding import make_rng
from deepfidelity.ssaaformer import ModelConfig, model_init
from deepfidelity.tensor import default_dtype


@pytest.fixture
def rng():
    """Fresh generator, identical in every test."""
    return make_rng(0, "data")


@pytest.fixture
def float64():
    """Create tensors in double precision inside the test."""
    with default_dtype(np.float64):
        yield


@pytest.fixture
def tiny_config():
    """Gradient check preset."""
    return ModelConfig.tiny()


@pytest.fixture
def desk_config():
    """Desk scale preset."""
    return ModelConfig.desk()


@pytest.fixture
def tiny_model(tiny_config):
    """Freshly initialized tiny backbone in evaluation mode."""
    return model_init(tiny_config).eval()


@pytest.fixture
def make_records():
    """Build unmapped records from ``(label, quality)`` pairs."""

    def build(pairs, prefix="img"):
        return [
            FidelityRecord(image_path=f"{prefix}_{index}.png", label=Label(label), quality_raw=q)
            for index, (label, q) in enumerate(pairs)
        ]

    return build


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Generated 16 pixel dataset split and mapped like the pipeline does.

    Returns
    -------
    dict
        ``manifest``, ``train`` and ``test`` manifest paths plus the mapped
        ``train_records`` and ``test_records``.
    """
    directory = tmp_path_factory.mktemp("synthetic")
    config = SynthConfig(n_real=10, n_fake=10, image_size=16, seed=7)
    manifest = gen_synthetic(config, directory, progress=False)
    train_path, test_path = split_manifest(manifest, 0.3, seed=7)
    train_records, stats = map_quality(train_path, directory / "train_mapped.csv")
    test_records, _ = map_quality(test_path, directory / "test_mapped.csv", stats=stats)
    return {
        "directory": directory,
        "manifest": manifest,
        "train": directory / "train_mapped.csv",
        "test": directory / "test_mapped.csv",
        "train_records": train_records,
        "test_records": test_records,
        "stats": stats,
    }

# tests/pipeline/test_features.py
"""Embedding extraction and feature files."""
import numpy as np
import pytest

from deepfidelity.errors import ManifestParseError
from deepfidelity.pipeline.features import extract_features, read_features, write_features


def test_extract_features(tiny_model, small_dataset, tmp_path):
    """Test one row per record with paths and targets."""
    records = small_dataset["test_records"]
    features = extract_features(tiny_model, records, tmp_path / "f.csv", progress=False)
    assert features.shape == (len(records), tiny_model.config.stage_channels[-1])
    paths, targets, values = read_features(tmp_path / "f.csv")
    assert paths == [record.image_path for record in records]
    np.testing.assert_array_equal(targets, [record.fidelity_target for record in records])
    np.testing.assert_array_equal(values, features)


def test_feature_file_reads_back_exactly(rng, tmp_path):
    """Test that written doubles come back bit for bit."""
    features = rng.standard_normal((200, 4)) * 10.0 ** rng.integers(-8, 8, (200, 4))
    targets = rng.uniform(0.0, 1.0, 200)
    paths = [f"img_{index}.png" for index in range(200)]
    write_features(paths, targets, features, tmp_path / "f.csv")
    read_paths, read_targets, read_values = read_features(tmp_path / "f.csv")
    assert read_paths == paths
    np.testing.assert_array_equal(read_targets, targets)
    np.testing.assert_array_equal(read_values, features)


def test_extraction_is_repeatable(tiny_model, small_dataset, tmp_path):
    """Test byte identical files of two extractions."""
    records = small_dataset["test_records"]
    extract_features(tiny_model, records, tmp_path / "a.csv", batch_size=4, progress=False)
    extract_features(tiny_model, records, tmp_path / "b.csv", batch_size=4, progress=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_duplicate_images_give_identical_rows(tiny_model, small_dataset, tmp_path):
    """Test two records of the same image."""
    record = small_dataset["test_records"][0]
    features = extract_features(
        tiny_model, [record, record], tmp_path / "twins.csv", "binary", progress=False
    )
    np.testing.assert_allclose(features[0], features[1], rtol=1e-6, atol=1e-7)


def test_write_features_layout(tmp_path):
    """Test the header of a feature file."""
    write_features(["a", "b"], [0.5, 1.0], [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], tmp_path / "x.csv")
    header = (tmp_path / "x.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "path,target,f0,f1,f2"


@pytest.mark.parametrize(
    "text",
    ["name,target,f0\na,1,2\n", "path,target,g0\na,1,2\n", "path,target\na,1\n",
     "path,target,f0\na,1,x\n"],
)
def test_read_features_errors(tmp_path, text):
    """Test malformed feature files."""
    path = tmp_path / "bad.csv"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ManifestParseError):
        read_features(path)

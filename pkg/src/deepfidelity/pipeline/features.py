# src/deepfidelity/pipeline/features.py
"""Backbone embeddings of manifest records."""
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..errors import DimensionError, ManifestParseError
from ..tensor import Tensor, no_grad
from .images import load_images
from .training import training_targets

logger = logging.getLogger(__name__)


def embed_records(model, records, batch_size=32, workers=1, progress=True):
    """Pooled stage 4 embeddings ``[N, c4]`` of ``records`` in input order."""
    records = list(records)
    size = model.config.input_size
    channels = model.config.stage_channels[-1]
    model.eval()
    rows = []
    with no_grad():
        starts = range(0, len(records), batch_size)
        for start in tqdm(starts, desc="embedding", leave=False, disable=not progress):
            chunk = records[start:start + batch_size]
            images = load_images([r.image_path for r in chunk], size, workers)
            embedding, _ = model.forward(Tensor(images))
            rows.append(embedding.data.astype(np.float64))
    if not rows:
        return np.zeros((0, channels))
    return np.concatenate(rows)


def feature_columns(dimension):
    """Names ``f0 .. f{d-1}`` of the feature columns."""
    return [f"f{index}" for index in range(dimension)]


def write_features(paths, targets, features, out_path):
    """Write a feature csv with header ``path,target,f0..``."""
    features = np.asarray(features, dtype=np.float64)
    frame = pd.DataFrame(features, columns=feature_columns(features.shape[1]))
    frame.insert(0, "target", np.asarray(targets, dtype=np.float64))
    frame.insert(0, "path", list(paths))
    frame.to_csv(out_path, index=False, float_format="%.17g")
    logger.info("wrote %d feature rows to %s", len(frame), out_path)
    return Path(out_path)


def read_features(path):
    """Read a feature csv.

    Returns
    -------
    tuple
        ``(paths list, targets [N], features [N, d])``.
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns[:2]) != ["path", "target"]:
        raise ManifestParseError("feature file must start with the columns path,target", 1)
    columns = list(frame.columns[2:])
    if not columns or columns != feature_columns(len(columns)):
        raise ManifestParseError("feature columns must be named f0, f1, ...", 1)
    try:
        values = frame[columns].to_numpy(dtype=np.float64)
        targets = frame["target"].to_numpy(dtype=np.float64)
    except ValueError as error:
        raise ManifestParseError(f"non numeric feature value: {error}") from error
    return frame["path"].astype(str).tolist(), targets, values


def extract_features(
    model, records, out_path, target_mode="fidelity", batch_size=32, workers=1, progress=True
):
    """Embed ``records`` and write them with their paths and targets.

    Parameters
    ----------
    model: ~deepfidelity.ssaaformer.SSAAFormerModel
        Trained backbone.
    records: ~collections.abc.Sequence
        Records to embed, the row order is kept.
    out_path: str, ~pathlib.Path
        Feature csv to write.
    target_mode: str, default="fidelity"
        Target column content, see
        :func:`~deepfidelity.pipeline.training.training_targets`.

    Returns
    -------
    numpy.ndarray
        The ``[N, c4]`` embeddings.
    """
    records = list(records)
    features = embed_records(model, records, batch_size, workers, progress)
    if features.shape[0] != len(records):
        raise DimensionError(f"{features.shape[0]} embeddings for {len(records)} records")
    write_features(
        [r.image_path for r in records],
        training_targets(records, target_mode),
        features,
        out_path,
    )
    return features

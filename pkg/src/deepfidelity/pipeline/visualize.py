# src/deepfidelity/pipeline/visualize.py
"""Grayscale dumps of intermediate feature maps."""
import logging
from pathlib import Path

import numpy as np

from ..errors import DomainError
from ..tensor import Tensor, no_grad
from .images import load_image, write_pixels

logger = logging.getLogger(__name__)

#: Relative value range below which a map counts as constant.
CONSTANT_TOLERANCE = 1e-6


def channel_mean_map(feature_map):
    """Channel mean of a ``[C, H, W]`` map, min-max scaled to ``[0, 1]``.

    A constant map (up to single precision noise) becomes mid gray.
    """
    mean = np.asarray(feature_map, dtype=np.float64).mean(axis=0)
    low, high = mean.min(), mean.max()
    if high - low <= CONSTANT_TOLERANCE * max(abs(low), abs(high), 1.0):
        return np.full(mean.shape, 0.5)
    return (mean - low) / (high - low)


def dump_feature_maps(model, image, out_dir, n_blocks):
    """Write one grayscale PNG per block for the first ``n_blocks`` blocks.

    Each file holds the min-max scaled channel mean of the block output.
    The DPE and depthwise convolutions zero pad their inputs, so even a
    constant image gives maps that differ along the borders; only maps
    that are constant up to :data:`CONSTANT_TOLERANCE` come out mid gray.

    Parameters
    ----------
    model: ~deepfidelity.ssaaformer.SSAAFormerModel
        Backbone.
    image: str, ~pathlib.Path, numpy.ndarray
        Image file, or an already normalized ``[3, S, S]`` model input.
    out_dir: str, ~pathlib.Path
        Target directory, created if missing.
    n_blocks: int
        Number of leading blocks to dump.

    Returns
    -------
    list
        Paths of the written files ``block00_stage1.png`` ...
    """
    total = len(model.blocks)
    if not 1 <= n_blocks <= total:
        raise DomainError(f"n_blocks must lie in [1, {total}], got {n_blocks}")
    if isinstance(image, (str, Path)):
        image = load_image(image, model.config.input_size)
    batch = Tensor(np.asarray(image)[None])

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.eval()
    paths = []
    with no_grad():
        for index, (block, feature_map) in enumerate(model.forward_blocks(batch)):
            if index == n_blocks:
                break
            path = out_dir / f"block{index:02d}_stage{block.stage}.png"
            write_pixels(channel_mean_map(feature_map.data[0]), path)
            paths.append(path)
    logger.info("dumped %d feature maps to %s", len(paths), out_dir)
    return paths

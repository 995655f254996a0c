# src/deepfidelity/pipeline/images.py
"""Image file input and output."""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import ImageReadError

logger = logging.getLogger(__name__)

#: Fixed per channel normalization ``(x - mean) / std`` of ``[0, 1]`` pixels.
PIXEL_MEAN = 0.5
PIXEL_STD = 0.5


def read_pixels(path, size=None):
    """Read an RGB image as a ``[3, H, W]`` float64 array in ``[0, 1]``.

    Parameters
    ----------
    path: str, ~pathlib.Path
        Image file.
    size: int, None, default=None
        Bilinearly resize to ``size x size`` pixels if given.

    Raises
    ------
    ImageReadError
        If the file is missing or not a readable image.
    """
    try:
        with Image.open(path) as image:
            image = image.convert("RGB")
            if size is not None and image.size != (size, size):
                image = image.resize((size, size), Image.Resampling.BILINEAR)
            array = np.asarray(image, dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError, ValueError) as error:
        raise ImageReadError(path, str(error)) from error
    return array.transpose(2, 0, 1)


def load_image(path, size):
    """Model input of one image: resized, normalized float32 ``[3, S, S]``."""
    pixels = read_pixels(path, size)
    return ((pixels - PIXEL_MEAN) / PIXEL_STD).astype(np.float32)


def load_images(paths, size, workers=1):
    """Stack the model inputs of ``paths`` into ``[N, 3, S, S]``.

    Parameters
    ----------
    paths: ~collections.abc.Sequence
        Image files, the output keeps their order.
    size: int
        Model input size.
    workers: int, default=1
        Reader threads.
    """
    paths = list(paths)
    if not paths:
        return np.zeros((0, 3, size, size), dtype=np.float32)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(lambda path: load_image(path, size), paths))
    else:
        images = [load_image(path, size) for path in paths]
    logger.debug("loaded %d images at %dx%d", len(images), size, size)
    return np.stack(images)


def write_pixels(pixels, path):
    """Write a ``[3, H, W]`` or ``[H, W]`` array in ``[0, 1]`` as 8 bit PNG."""
    array = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    if array.ndim == 3:
        image = Image.fromarray(np.ascontiguousarray(array.transpose(1, 2, 0)), "RGB")
    else:
        image = Image.fromarray(array, "L")
    image.save(path, format="PNG")
    return path


def quantize(pixels):
    """Round ``[0, 1]`` pixels to the 8 bit grid a PNG stores."""
    return np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255) / 255.0

# src/deepfidelity/fidelity/quality.py
"""Laplacian variance sharpness as a stand-in face quality score."""
import numpy as np
from scipy.signal import convolve2d

from ..errors import DimensionError, DomainError
from ..tensor import Tensor

#: ITU-R BT.601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

LAPLACIAN_KERNEL = np.array(
    [
        [0.0, 1.0, 0.0],
        [1.0, -4.0, 1.0],
        [0.0, 1.0, 0.0],
    ]
)


def to_grayscale(image):
    """Luma of a ``[3, H, W]`` (or already gray ``[H, W]``) image."""
    if isinstance(image, Tensor):
        image = image.data
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise DimensionError(f"expected a [3, H, W] or [H, W] image, got {image.shape}")
    if image.shape[0] == 1:
        return image[0]
    return np.tensordot(LUMA_WEIGHTS, image, axes=1)


def proxy_quality(image):
    """Variance of the 3x3 Laplacian response of the grayscale image.

    Sharper images score higher. Only interior pixels are filtered, so no
    padding enters the result.

    Parameters
    ----------
    image: numpy.ndarray, ~deepfidelity.tensor.Tensor
        ``[3, H, W]`` image with ``H, W >= 3``.

    Returns
    -------
    float
        Non negative sharpness score.

    Example
    -------
    >>> proxy_quality(np.ones((3, 8, 8)))
    0.0
    """
    gray = to_grayscale(image)
    if min(gray.shape) < 3:
        raise DomainError(f"image of size {gray.shape} is too small for a 3x3 Laplacian")
    response = convolve2d(gray, LAPLACIAN_KERNEL, mode="valid")
    return float(response.var())

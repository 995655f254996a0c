# src/deepfidelity/svr/kernel.py
"""Gaussian radial basis function kernel."""
import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from ..errors import DimensionError, DomainError


def _check_sigma(sigma):
    sigma = float(sigma)
    if not sigma > 0:
        raise DomainError(f"kernel width sigma must be positive, got {sigma}")
    return sigma


def rbf_kernel(x, x_prime, sigma):
    """Similarity ``exp(-||x - x'||^2 / (2 sigma^2))`` of two vectors.

    Parameters
    ----------
    x, x_prime: ~collections.abc.Sequence
        Vectors of equal dimension.
    sigma: float
        Kernel width, controlling how fast the similarity decays with the
        distance.

    Returns
    -------
    float
        Similarity in ``(0, 1]``, exactly ``1.0`` for ``x == x_prime``.

    Example
    -------
    >>> round(rbf_kernel([0.0, 0.0], [1.0, 1.0], 1.0), 6)
    0.367879
    """
    sigma = _check_sigma(sigma)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x_prime = np.asarray(x_prime, dtype=np.float64).reshape(-1)
    if x.shape != x_prime.shape:
        raise DimensionError(f"vector dimensions differ: {x.size} != {x_prime.size}")
    difference = x - x_prime
    return float(np.exp(-np.dot(difference, difference) / (2.0 * sigma**2)))


def _as_matrix(vectors, name):
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise DimensionError(f"{name} must be a non empty [n, d] matrix, got {matrix.shape}")
    return matrix


def gram_matrix(vectors, sigma, others=None):
    """Pairwise kernel matrix.

    Parameters
    ----------
    vectors: ~collections.abc.Sequence
        ``[n, d]`` row vectors.
    sigma: float
        Kernel width.
    others: ~collections.abc.Sequence, None, default=None
        ``[m, d]`` row vectors. The square, exactly symmetric matrix of
        ``vectors`` with itself is returned if omitted.

    Returns
    -------
    numpy.ndarray
        ``[n, n]`` or ``[n, m]`` kernel values.

    Example
    -------
    >>> gram_matrix([[1.0, 2.0], [1.0, 2.0]], 0.5)
    array([[1., 1.],
           [1., 1.]])
    """
    sigma = _check_sigma(sigma)
    vectors = _as_matrix(vectors, "vectors")
    if others is None:
        squared = squareform(pdist(vectors, "sqeuclidean"))
    else:
        others = _as_matrix(others, "others")
        if others.shape[1] != vectors.shape[1]:
            raise DimensionError(
                f"vector dimensions differ: {vectors.shape[1]} != {others.shape[1]}"
            )
        squared = cdist(vectors, others, "sqeuclidean")
    return np.exp(-squared / (2.0 * sigma**2))

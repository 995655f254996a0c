# src/deepfidelity/tensor/gradcheck.py
"""Finite difference verification of the recorded gradients."""
import logging

import numpy as np

from ..errors import ContractError, DomainError
from .core import no_grad

logger = logging.getLogger(__name__)


def _scalar(value):
    if value.size != 1:
        raise ContractError(f"gradient check needs a scalar function, got shape {value.shape}")
    return float(value.data.reshape(-1)[0])


def grad_check(fn, inputs, h=1e-4, n_samples=None, rng=None):
    """Compare backpropagated gradients with central differences.

    Parameters
    ----------
    fn: callable
        Maps the ``inputs`` tensors to a scalar tensor.
    inputs: list
        Double precision :class:`~deepfidelity.tensor.Tensor` leaves. Their
        ``requires_grad`` flag is switched on and their gradients reset.
    h: float, default=1e-4
        Central difference step.
    n_samples: int, None, default=None
        Check only this many randomly drawn entries per input instead of
        all of them.
    rng: numpy.random.Generator, None, default=None
        Draws the checked entries when ``n_samples`` is given.

    Returns
    -------
    float
        Maximum of ``|analytic - numeric| / max(1, |analytic|, |numeric|)``
        over the checked entries.

    Example
    -------
    >>> import numpy as np
    >>> from deepfidelity.tensor import Tensor, default_dtype
    >>> with default_dtype(np.float64):
    ...     x = Tensor(np.arange(3.0))
    ...     error = grad_check(lambda t: (t * t).sum(), [x])
    >>> error < 1e-8
    True
    """
    if h <= 0:
        raise DomainError(f"finite difference step must be positive, got {h}")
    for tensor in inputs:
        if tensor.dtype != np.float64:
            raise ContractError("gradient checks run in double precision only")
        tensor.requires_grad = True
        tensor.zero_grad()

    out = fn(*inputs)
    _scalar(out)
    out.backward()
    analytic = [
        np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad.copy()
        for tensor in inputs
    ]

    worst = 0.0
    with no_grad():
        for tensor, grad in zip(inputs, analytic):
            flat = tensor.data.reshape(-1)
            indices = np.arange(flat.size)
            if n_samples is not None and n_samples < flat.size:
                rng = rng if rng is not None else np.random.default_rng(0)
                indices = np.sort(rng.choice(flat.size, size=n_samples, replace=False))
            grad_flat = grad.reshape(-1)
            for index in indices:
                original = flat[index]
                flat[index] = original + h
                upper = _scalar(fn(*inputs))
                flat[index] = original - h
                lower = _scalar(fn(*inputs))
                flat[index] = original
                numeric = (upper - lower) / (2.0 * h)
                exact = float(grad_flat[index])
                error = abs(exact - numeric) / max(1.0, abs(exact), abs(numeric))
                worst = max(worst, error)
    logger.debug("gradient check max relative error %.3e", worst)
    return worst

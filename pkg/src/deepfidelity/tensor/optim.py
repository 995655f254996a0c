# src/deepfidelity/tensor/optim.py
"""AdamW optimizer with decoupled weight decay."""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_LEARNING_RATE = 1.2e-3
DEFAULT_WEIGHT_DECAY = 0.05


@dataclass
class AdamWState:
    """Moment estimates and step counter of an AdamW run.

    The moment lists are allocated lazily on the first update so they match
    the parameter shapes.
    """

    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adamw_step(params, grads, state, lr=DEFAULT_LEARNING_RATE, weight_decay=DEFAULT_WEIGHT_DECAY):
    """Apply one AdamW update in place.

    The decoupled decay ``param -= lr * weight_decay * param`` is applied
    first, then the bias corrected Adam step.

    Parameters
    ----------
    params: list
        :class:`~deepfidelity.tensor.Tensor` objects updated in place.
    grads: list
        One gradient array per parameter. ``None`` is treated as zero.
    state: AdamWState
        Optimizer state, mutated in place.
    lr: float
        Step size. ``0`` leaves every parameter untouched.
    weight_decay: float
        Decoupled decay coefficient.

    Example
    -------
    >>> import numpy as np
    >>> from deepfidelity.tensor import Tensor
    >>> param = Tensor(np.zeros(1), dtype=np.float64)
    >>> adamw_step([param], [np.ones(1)], AdamWState(), lr=0.1, weight_decay=0.0)
    >>> round(float(param.data[0]), 6)
    -0.1
    """
    if lr < 0:
        raise DomainError(f"learning rate must not be negative, got {lr}")
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    grads = [
        np.zeros_like(param.data) if grad is None else np.asarray(grad)
        for param, grad in zip(params, grads)
    ]
    for param, grad in zip(params, grads):
        if param.shape != grad.shape:
            raise DimensionError(
                f"gradient shape {grad.shape} does not match parameter {param.shape}"
            )
    if not state.first_moment:
        state.first_moment = [np.zeros_like(param.data) for param in params]
        state.second_moment = [np.zeros_like(param.data) for param in params]
    elif len(state.first_moment) != len(params):
        raise DimensionError(
            f"optimizer state tracks {len(state.first_moment)} parameters, got {len(params)}"
        )

    state.step_count += 1
    step = state.step_count
    correction1 = 1.0 - state.beta1**step
    correction2 = 1.0 - state.beta2**step
    for param, grad, first, second in zip(
        params, grads, state.first_moment, state.second_moment
    ):
        if first.shape != param.shape:
            raise DimensionError(
                f"moment shape {first.shape} does not match parameter {param.shape}"
            )
        param.data -= lr * weight_decay * param.data
        first *= state.beta1
        first += (1.0 - state.beta1) * grad
        second *= state.beta2
        second += (1.0 - state.beta2) * grad * grad
        param.data -= lr * (first / correction1) / (
            np.sqrt(second / correction2) + state.epsilon
        )


class AdamW:
    """Stateful wrapper around :func:`adamw_step` for a fixed parameter list.

    Parameters
    ----------
    params: list
        Tensors to optimize.
    lr: float, default=1.2e-3
        Step size.
    weight_decay: float, default=0.05
        Decoupled decay coefficient.
    """

    def __init__(self, params, lr=DEFAULT_LEARNING_RATE, weight_decay=DEFAULT_WEIGHT_DECAY):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = AdamWState()

    def zero_grad(self):
        """Reset the accumulated gradients of every parameter."""
        for param in self.params:
            param.zero_grad()

    def step(self):
        """Update every parameter from its accumulated gradient."""
        adamw_step(
            self.params,
            [param.grad for param in self.params],
            self.state,
            lr=self.lr,
            weight_decay=self.weight_decay,
        )
        logger.debug("adamw step %d", self.state.step_count)

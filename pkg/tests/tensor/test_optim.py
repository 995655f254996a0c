# tests/tensor/test_optim.py
"""AdamW updates."""
import math

import numpy as np
import pytest

from deepfidelity.errors import DimensionError, DomainError
from deepfidelity.tensor import AdamW, AdamWState, Tensor, adamw_step


def _param(value):
    return Tensor(np.array([value]), requires_grad=True, dtype=np.float64)


def test_first_step_closed_form():
    """Test the bias corrected first step of size ``lr``."""
    param = _param(0.0)
    state = AdamWState()
    adamw_step([param], [np.ones(1)], state, lr=0.1, weight_decay=0.0)
    assert abs(param.data[0] + 0.1) < 1e-6
    assert state.step_count == 1


def test_decay_of_zero_parameter_is_zero():
    """Test that the decay term vanishes for a zero parameter."""
    decayed, plain = _param(0.0), _param(0.0)
    adamw_step([decayed], [np.ones(1)], AdamWState(), lr=0.1, weight_decay=0.5)
    adamw_step([plain], [np.ones(1)], AdamWState(), lr=0.1, weight_decay=0.0)
    assert decayed.data[0] == plain.data[0]


def test_zero_gradient_keeps_parameters(rng):
    """Test a fresh state with a zero gradient and no decay."""
    values = rng.standard_normal((3, 2))
    param = Tensor(values, dtype=np.float64)
    adamw_step([param], [np.zeros((3, 2))], AdamWState(), lr=0.1, weight_decay=0.0)
    np.testing.assert_array_equal(param.data, values)


def test_zero_learning_rate_is_bitwise_identity(rng):
    """Test ``lr = 0``."""
    values = rng.standard_normal(4).astype(np.float32)
    param = Tensor(values.copy())
    adamw_step([param], [rng.standard_normal(4)], AdamWState(), lr=0.0, weight_decay=0.05)
    np.testing.assert_array_equal(param.data, values)


def test_matches_scalar_adam_reference():
    """Test 100 steps on ``(p - 3)^2`` against a scalar Adam."""
    lr, beta1, beta2, eps = 0.05, 0.9, 0.999, 1e-8
    param = _param(0.5)
    optimizer = AdamW([param], lr=lr, weight_decay=0.0)
    reference, first, second = 0.5, 0.0, 0.0
    for step in range(1, 101):
        param.grad = 2.0 * (param.data - 3.0)
        optimizer.step()
        grad = 2.0 * (reference - 3.0)
        first = beta1 * first + (1.0 - beta1) * grad
        second = beta2 * second + (1.0 - beta2) * grad * grad
        reference -= lr * (first / (1.0 - beta1**step)) / (
            math.sqrt(second / (1.0 - beta2**step)) + eps
        )
    assert optimizer.state.step_count == 100
    assert abs(param.data[0] - reference) < 1e-10


def test_optimizer_decreases_quadratic():
    """Test convergence towards the minimum."""
    param = _param(-2.0)
    optimizer = AdamW([param], lr=0.1, weight_decay=0.0)
    for _ in range(300):
        optimizer.zero_grad()
        ((param - 1.0) * (param - 1.0)).sum().backward()
        optimizer.step()
    assert abs(param.data[0] - 1.0) < 5e-2


def test_errors():
    """Test negative learning rates and shape mismatches."""
    param = _param(1.0)
    with pytest.raises(DomainError):
        adamw_step([param], [np.ones(1)], AdamWState(), lr=-1.0)
    with pytest.raises(DimensionError):
        adamw_step([param], [np.ones(2)], AdamWState())
    with pytest.raises(DimensionError):
        adamw_step([param], [], AdamWState())

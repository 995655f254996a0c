# tests/tensor/test_core.py
"""Tape recording and reverse mode accumulation."""
import numpy as np
import pytest

from deepfidelity.errors import ContractError
from deepfidelity.tensor import Tensor, default_dtype, get_default_dtype, no_grad


def test_sum_gradient_is_ones():
    """Test the linear map."""
    x = Tensor(np.arange(4.0), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones(4))


def test_square_gradient(rng):
    """Test ``d/dx sum(x^2) = 2x``."""
    values = rng.standard_normal(5)
    x = Tensor(values, requires_grad=True, dtype=np.float64)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, 2 * values)


def test_gradients_accumulate_until_reset():
    """Test additive accumulation over reuse and repeated backward calls."""
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x + x + x).sum().backward()
    np.testing.assert_array_equal(x.grad, [3.0, 3.0])
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 4.0])
    x.zero_grad()
    assert x.grad is None


def test_intermediate_tensors_receive_gradients():
    """Test the gradients of every tracked tensor on the tape."""
    x = Tensor([1.0, -2.0], requires_grad=True, dtype=np.float64)
    y = x * 3.0
    z = y * y
    loss = z.sum()
    loss.backward()
    np.testing.assert_array_equal(loss.grad, 1.0)
    np.testing.assert_array_equal(z.grad, [1.0, 1.0])
    np.testing.assert_array_equal(y.grad, [6.0, -12.0])
    np.testing.assert_array_equal(x.grad, [18.0, -36.0])


def test_backward_contracts():
    """Test the non scalar loss and the untracked loss."""
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()
    with pytest.raises(ContractError):
        Tensor([1.0]).sum().backward()


def test_no_grad_records_nothing():
    """Test that no tape is built inside ``no_grad``."""
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 3.0
    assert y.is_leaf
    assert not y.requires_grad


def test_default_dtype_context():
    """Test the temporary switch to double precision."""
    assert get_default_dtype() is np.float32
    with default_dtype(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_item_needs_single_value():
    """Test :meth:`Tensor.item`."""
    assert Tensor([[2.5]]).item() == 2.5
    with pytest.raises(ContractError):
        Tensor([1.0, 2.0]).item()

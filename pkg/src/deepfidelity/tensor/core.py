# src/deepfidelity/tensor/core.py
"""Dense tensor with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a :class:`numpy.ndarray`. Every differentiable
operation is a :class:`Function` subclass whose :meth:`Function.apply`
records the inputs on the output tensor, so calling
:meth:`Tensor.backward` on a scalar walks the recorded tape in reverse
topological order.
"""
import contextlib
import logging
import threading

import numpy as np

from ..errors import ContractError

logger = logging.getLogger(__name__)

_state = threading.local()


def get_default_dtype():
    """Return the floating point dtype new tensors are created with."""
    return getattr(_state, "dtype", np.float32)


def is_grad_enabled():
    """Return ``False`` while inside a :func:`no_grad` block."""
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype new tensors are created with.

    Single precision is used for training and inference; double precision
    only for gradient checks.

    Parameters
    ----------
    dtype: numpy.dtype
        One of :attr:`numpy.float32` or :attr:`numpy.float64`.

    Example
    -------
    >>> import numpy as np
    >>> with default_dtype(np.float64):
    ...     Tensor([1.0, 2.0]).dtype
    dtype('float64')
    """
    previous = get_default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


@contextlib.contextmanager
def no_grad():
    """Disable tape recording for the enclosed operations."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Function:
    """Base class of differentiable operations.

    Subclasses implement :meth:`forward` on plain arrays and :meth:`backward`
    returning one gradient array (or ``None``) per input tensor. Anything
    :meth:`backward` needs is stored on ``self`` during :meth:`forward`.
    """

    def __init__(self, *parents):
        self.parents = parents

    def forward(self, *arrays, **kwargs):
        """Compute the output array from the input arrays."""
        raise NotImplementedError

    def backward(self, grad):
        """Map the output gradient to a tuple of input gradients."""
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors, **kwargs):
        """Run :meth:`forward` and connect the result to the tape."""
        func = cls(*tensors)
        out = func.forward(*(tensor.data for tensor in tensors), **kwargs)
        requires_grad = is_grad_enabled() and any(
            tensor.requires_grad for tensor in tensors
        )
        return Tensor(
            out,
            requires_grad=requires_grad,
            creator=func if requires_grad else None,
            dtype=out.dtype,
        )


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` undoing numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense n-dimensional array with optional gradient tracking.

    Parameters
    ----------
    data: array_like
        Values of the tensor. Stored as a C-contiguous array.
    requires_grad: bool, default=False
        If ``True``, :meth:`backward` accumulates into :attr:`grad`.
    creator: Function, None, default=None
        Operation that produced this tensor. ``None`` for leaves.
    dtype: numpy.dtype, None, default=None
        Storage dtype. Defaults to :func:`get_default_dtype`.

    Example
    -------
    >>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    >>> (x * x).sum().backward()
    >>> x.grad
    array([2., 4., 6.], dtype=float32)
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, creator=None, dtype=None):
        if dtype is None:
            dtype = get_default_dtype()
        self.data = np.asarray(data, dtype=dtype, order="C")
        self.requires_grad = bool(requires_grad)
        self.creator = creator
        self.grad = None

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{grad})"

    @property
    def shape(self):
        """Tuple of axis lengths."""
        return self.data.shape

    @property
    def ndim(self):
        """Number of axes."""
        return self.data.ndim

    @property
    def size(self):
        """Number of stored values."""
        return self.data.size

    @property
    def dtype(self):
        """Storage dtype."""
        return self.data.dtype

    @property
    def is_leaf(self):
        """``True`` if the tensor was not produced by a recorded operation."""
        return self.creator is None

    def numpy(self):
        """Return a copy of the underlying array."""
        return self.data.copy()

    def item(self):
        """Return the single value of a one-element tensor as float."""
        if self.size != 1:
            raise ContractError(f"item needs a one-element tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        """Return a new leaf sharing no tape with this tensor."""
        return Tensor(self.data.copy(), dtype=self.dtype)

    def zero_grad(self):
        """Drop the accumulated gradient."""
        self.grad = None

    def accumulate_grad(self, grad):
        """Add ``grad`` to :attr:`grad`, allocating it on first use."""
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self):
        """Backpropagate from this scalar tensor through the recorded tape.

        Every tensor on the tape that requires grad, leaves and
        intermediates alike, accumulates its gradient additively into
        :attr:`grad`; it is only reset through :meth:`zero_grad`.

        Raises
        ------
        ContractError
            If the tensor is not a scalar or does not require grad.
        """
        if self.size != 1:
            raise ContractError(
                f"backward needs a scalar loss, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise ContractError("backward called on a tensor without grad tracking")

        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            node.accumulate_grad(grad)
            if node.creator is None:
                continue
            parent_grads = node.creator.backward(grad)
            for parent, parent_grad in zip(node.creator.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad
        logger.debug("backward visited %d tensors", len(order))

    # arithmetic ------------------------------------------------------------
    def __add__(self, other):
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.add(self, F.neg(as_tensor(other, like=self)))

    def __rsub__(self, other):
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.add(F.neg(self), other)

    def __neg__(self):
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.neg(self)

    def __mul__(self, other):
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F  # pylint: disable=import-outside-toplevel

        if isinstance(other, Tensor):
            return F.mul(self, F.power(other, -1.0))
        return F.mul(self, 1.0 / other)

    def __pow__(self, exponent):
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.power(self, exponent)

    def __matmul__(self, other):
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        """Sum over ``axis`` (all axes by default)."""
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        """Arithmetic mean over ``axis`` (all axes by default)."""
        from . import functional as F  # pylint: disable=import-outside-toplevel

        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        """Return a tensor with the same values and a new shape."""
        from . import functional as F  # pylint: disable=import-outside-toplevel

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        """Permute the axes."""
        from . import functional as F  # pylint: disable=import-outside-toplevel

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes)


def as_tensor(value, like=None):
    """Wrap ``value`` into a constant tensor unless it already is one."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _topological_order(root):
    """Return the tracked sub-graph below ``root`` parents first.

    Iterative depth first search, so deep models do not hit the recursion
    limit.
    """
    order = []
    visited = set()
    on_path = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            on_path.discard(id(node))
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        on_path.add(id(node))
        stack.append((node, True))
        if node.creator is None:
            continue
        for parent in node.creator.parents:
            if not parent.requires_grad:
                continue
            if id(parent) in on_path:
                raise ContractError("cycle detected in the recorded graph")
            if id(parent) not in visited:
                stack.append((parent, False))
    return order

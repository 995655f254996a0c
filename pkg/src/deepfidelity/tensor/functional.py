# src/deepfidelity/tensor/functional.py
# pylint: disable=arguments-differ
# pylint: disable=attribute-defined-outside-init
"""Differentiable tensor operations.

Each public function validates its arguments, raising
:class:`~deepfidelity.errors.DimensionError`,
:class:`~deepfidelity.errors.ConfigurationError` or
:class:`~deepfidelity.errors.DomainError`, and then dispatches to a
:class:`~deepfidelity.tensor.core.Function` implementing forward and
backward on numpy arrays.
"""
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import ConfigurationError, DimensionError, DomainError
from .core import Function, Tensor, as_tensor, unbroadcast

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


# elementwise ---------------------------------------------------------------
class _Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class _Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            unbroadcast(grad * self.b, self.a.shape),
            unbroadcast(grad * self.a, self.b.shape),
        )


class _Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class _Power(Function):
    def forward(self, a, exponent):
        self.a, self.exponent = a, exponent
        return np.power(a, exponent)

    def backward(self, grad):
        return (grad * self.exponent * np.power(self.a, self.exponent - 1),)


def add(a, b):
    """Elementwise sum with numpy broadcasting."""
    a = as_tensor(a)
    return _Add.apply(a, as_tensor(b, like=a))


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    a = as_tensor(a)
    return _Mul.apply(a, as_tensor(b, like=a))


def neg(a):
    """Elementwise negation."""
    return _Neg.apply(as_tensor(a))


def power(a, exponent):
    """Raise every element to the constant real ``exponent``."""
    return _Power.apply(as_tensor(a), exponent=float(exponent))


# reductions and shape ------------------------------------------------------
class _Sum(Function):
    def forward(self, a, axis, keepdims):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class _Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class _Transpose(Function):
    def forward(self, a, axes):
        self.axes = axes
        return np.ascontiguousarray(np.transpose(a, axes))

    def backward(self, grad):
        return (np.ascontiguousarray(np.transpose(grad, np.argsort(self.axes))),)


def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"axis {ax} out of range for {ndim} dimensions")
        normalized.append(ax % ndim)
    return tuple(normalized)


def sum(a, axis=None, keepdims=False):  # pylint: disable=redefined-builtin
    """Sum over ``axis`` (all axes by default)."""
    a = as_tensor(a)
    return _Sum.apply(a, axis=_normalize_axis(axis, a.ndim), keepdims=keepdims)


def mean(a, axis=None, keepdims=False):
    """Arithmetic mean over ``axis`` (all axes by default)."""
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    count = a.size if axes is None else int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    """Return a tensor with the same row-major values and a new shape."""
    a = as_tensor(a)
    try:
        np.empty(a.shape, dtype=np.bool_).reshape(shape)
    except ValueError as error:
        raise DimensionError(f"cannot reshape {a.shape} into {shape}") from error
    return _Reshape.apply(a, shape=tuple(shape))


def transpose(a, axes):
    """Permute the axes of ``a``."""
    a = as_tensor(a)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"invalid permutation {axes} for {a.ndim} axes")
    return _Transpose.apply(a, axes=tuple(axes))


# linear algebra ------------------------------------------------------------
class _MatMul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        grad_a = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        grad_b = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return unbroadcast(grad_a, self.a.shape), unbroadcast(grad_b, self.b.shape)


def matmul(a, b):
    """Matrix product of the two trailing axes, broadcasting leading axes.

    Example
    -------
    >>> matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
    Tensor(array([[19., 22.],
           [43., 50.]], dtype=float32))
    """
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs at least 2 axes, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"inner dimensions differ: {a.shape} @ {b.shape}"
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as error:
        raise DimensionError(
            f"leading axes do not broadcast: {a.shape} @ {b.shape}"
        ) from error
    return _MatMul.apply(a, b)


def linear(x, weight, bias=None):
    """Affine map ``x @ weight + bias`` over the last axis of ``x``."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# convolution -------------------------------------------------------------
class _Conv2d(Function):
    def forward(self, x, kernel, bias=None, stride=1, padding=0, groups=1):
        n, channels = x.shape[:2]
        out_channels, group_channels, k_h, k_w = kernel.shape
        self.x_shape = x.shape
        self.stride, self.padding, self.groups = stride, padding, groups
        self.has_bias = bias is not None

        padded = x
        if padding:
            padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        self.padded_shape = padded.shape
        windows = sliding_window_view(padded, (k_h, k_w), axis=(2, 3))
        windows = windows[:, :, ::stride, ::stride]
        out_h, out_w = windows.shape[2], windows.shape[3]
        self.windows = windows.reshape(
            n, groups, channels // groups, out_h, out_w, k_h, k_w
        )
        self.kernel = kernel.reshape(
            groups, out_channels // groups, group_channels, k_h, k_w
        )
        out = np.einsum("ngchwij,gocij->ngohw", self.windows, self.kernel, optimize=True)
        out = out.reshape(n, out_channels, out_h, out_w)
        if self.has_bias:
            out = out + bias.reshape(1, -1, 1, 1)
        return np.ascontiguousarray(out)

    def backward(self, grad):
        n, _, out_h, out_w = grad.shape
        groups, stride = self.groups, self.stride
        k_h, k_w = self.kernel.shape[-2:]
        grouped = grad.reshape(n, groups, -1, out_h, out_w)

        grad_kernel = np.einsum(
            "ngohw,ngchwij->gocij", grouped, self.windows, optimize=True
        ).reshape(-1, *self.kernel.shape[2:])
        grad_windows = np.einsum(
            "ngohw,gocij->ngchwij", grouped, self.kernel, optimize=True
        ).reshape(n, -1, out_h, out_w, k_h, k_w)

        grad_padded = np.zeros(self.padded_shape, dtype=grad.dtype)
        row_end, col_end = stride * (out_h - 1) + 1, stride * (out_w - 1) + 1
        for i in range(k_h):
            for j in range(k_w):
                grad_padded[:, :, i : i + row_end : stride, j : j + col_end : stride] += (
                    grad_windows[..., i, j]
                )
        pad = self.padding
        height, width = self.x_shape[2:]
        grad_x = grad_padded[:, :, pad : pad + height, pad : pad + width]

        grads = [np.ascontiguousarray(grad_x), grad_kernel]
        if self.has_bias:
            grads.append(grad.sum(axis=(0, 2, 3)))
        return tuple(grads)


def conv2d(x, kernel, bias=None, stride=1, padding=0, groups=1):
    """Grouped 2d cross-correlation with zero padding.

    ``groups == C_in`` gives the depthwise convolution, a ``1x1`` kernel the
    pointwise one.

    Parameters
    ----------
    x: Tensor
        Input of shape ``[N, C_in, H, W]``.
    kernel: Tensor
        Weights of shape ``[C_out, C_in / groups, kH, kW]``.
    bias: Tensor, None, default=None
        Optional ``[C_out]`` offsets.
    stride: int, default=1
        Step between output cells.
    padding: int, default=0
        Zeros added on every spatial border.
    groups: int, default=1
        Number of independent channel groups.

    Returns
    -------
    Tensor
        Output of shape ``[N, C_out, H', W']`` with
        ``H' = (H + 2 padding - kH) // stride + 1``.

    Example
    -------
    >>> image = Tensor(np.arange(1.0, 10.0).reshape(1, 1, 3, 3))
    >>> conv2d(image, Tensor(np.ones((1, 1, 2, 2)))).data[0, 0]
    array([[12., 16.],
           [24., 28.]], dtype=float32)
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel, like=x)
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be [N, C, H, W], got {x.shape}")
    if kernel.ndim != 4:
        raise DimensionError(f"conv2d kernel must be 4d, got {kernel.shape}")
    if groups < 1 or stride < 1 or padding < 0:
        raise ConfigurationError(
            f"invalid conv2d setup stride={stride} padding={padding} groups={groups}"
        )
    in_channels, out_channels = x.shape[1], kernel.shape[0]
    if in_channels % groups or out_channels % groups:
        raise ConfigurationError(
            f"channels {in_channels}->{out_channels} not divisible by groups={groups}"
        )
    if kernel.shape[1] != in_channels // groups:
        raise DimensionError(
            f"kernel expects {kernel.shape[1]} channels per group, input "
            f"provides {in_channels // groups}"
        )
    k_h, k_w = kernel.shape[2:]
    if x.shape[2] + 2 * padding < k_h or x.shape[3] + 2 * padding < k_w:
        raise DimensionError(
            f"kernel {k_h}x{k_w} larger than padded input {x.shape[2:]}"
        )
    tensors = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias, like=x)
        if bias.shape != (out_channels,):
            raise DimensionError(
                f"bias must have shape ({out_channels},), got {bias.shape}"
            )
        tensors.append(bias)
    return _Conv2d.apply(*tensors, stride=stride, padding=padding, groups=groups)


class _HFlip(Function):
    def forward(self, a):
        return np.ascontiguousarray(a[..., ::-1])

    def backward(self, grad):
        return (np.ascontiguousarray(grad[..., ::-1]),)


def hflip(x):
    """Mirror ``x`` along its last (width) axis.

    Example
    -------
    >>> hflip(Tensor([1.0, 2.0, 3.0])).data
    array([3., 2., 1.], dtype=float32)
    """
    x = as_tensor(x)
    if x.ndim == 0 or x.size == 0:
        raise DomainError(f"hflip needs a non-empty tensor, got shape {x.shape}")
    return _HFlip.apply(x)


# activations and normalizations ------------------------------------------
class _Softmax(Function):
    def forward(self, a, axis):
        self.axis = axis
        shifted = np.exp(a - a.max(axis=axis, keepdims=True))
        self.out = shifted / shifted.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        inner = (grad * self.out).sum(axis=self.axis, keepdims=True)
        return (self.out * (grad - inner),)


def softmax(x, axis=-1):
    """Numerically stable softmax along ``axis``.

    Example
    -------
    >>> bool(np.allclose(softmax(Tensor([0.0, math.log(3.0)])).data, [0.25, 0.75]))
    True
    """
    x = as_tensor(x)
    (axis,) = _normalize_axis(axis, x.ndim)
    return _Softmax.apply(x, axis=axis)


class _Gelu(Function):
    def forward(self, a):
        self.a = a
        self.cdf = 0.5 * (1.0 + erf(a / _SQRT2))
        return a * self.cdf

    def backward(self, grad):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * self.a * self.a)
        return (grad * (self.cdf + self.a * pdf),)


def gelu(x):
    """Gaussian error linear unit ``x * Phi(x)`` in its exact erf form."""
    return _Gelu.apply(as_tensor(x))


class _GlobalAvgPool(Function):
    def forward(self, a):
        self.shape = a.shape
        return a.mean(axis=(2, 3))

    def backward(self, grad):
        scale = 1.0 / (self.shape[2] * self.shape[3])
        grad = grad[:, :, None, None] * scale
        return (np.broadcast_to(grad, self.shape).astype(grad.dtype),)


def global_avg_pool(x):
    """Average ``[N, C, H, W]`` over its spatial axes into ``[N, C]``."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool needs [N, C, H, W], got {x.shape}")
    return _GlobalAvgPool.apply(x)


@dataclass
class RunningStats:
    """Per-channel running mean and variance of a batch norm layer.

    Updated in place by :func:`batchnorm2d` in training mode with
    ``new = (1 - momentum) * old + momentum * batch``.
    """

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels, dtype=np.float32, momentum=0.1):
        """Zero mean and unit variance statistics for ``channels``."""
        return cls(
            mean=np.zeros(channels, dtype=dtype),
            var=np.ones(channels, dtype=dtype),
            momentum=momentum,
        )


class _Normalize(Function):
    """Affine normalization of ``a`` over ``axes`` with given statistics.

    When ``batch_stats`` is ``True`` the mean and variance were computed from
    ``a`` itself, so their dependence on ``a`` enters the backward pass.
    """

    def forward(self, a, gamma, beta, axes, param_axes, mean, var, eps, batch_stats, shape):
        self.axes, self.param_axes, self.batch_stats = axes, param_axes, batch_stats
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.normalized = (a - mean) * self.inv_std
        self.gamma = gamma.reshape(shape)
        self.param_shape = gamma.shape
        return self.normalized * self.gamma + beta.reshape(shape)

    def backward(self, grad):
        axes = self.axes
        grad_gamma = (grad * self.normalized).sum(axis=self.param_axes).reshape(self.param_shape)
        grad_beta = grad.sum(axis=self.param_axes).reshape(self.param_shape)
        grad_norm = grad * self.gamma
        if not self.batch_stats:
            return grad_norm * self.inv_std, grad_gamma, grad_beta
        count = np.prod([grad.shape[ax] for ax in axes])
        sum_grad = grad_norm.sum(axis=axes, keepdims=True)
        sum_grad_norm = (grad_norm * self.normalized).sum(axis=axes, keepdims=True)
        grad_a = (self.inv_std / count) * (
            count * grad_norm - sum_grad - self.normalized * sum_grad_norm
        )
        return grad_a, grad_gamma, grad_beta


def batchnorm2d(x, gamma, beta, running_stats, training, eps=1e-5):
    """Batch normalization of ``[N, C, H, W]`` per channel.

    Parameters
    ----------
    x: Tensor
        Input feature map.
    gamma, beta: Tensor
        ``[C]`` affine scale and offset.
    running_stats: RunningStats
        Statistics used in evaluation mode, updated in training mode.
    training: bool
        Normalize with batch statistics (``True``) or running ones.
    eps: float, default=1e-5
        Variance stabilizer.

    Raises
    ------
    DomainError
        If ``eps`` is not positive or a training batch holds a single value
        per channel.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"batchnorm2d needs [N, C, H, W], got {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"affine parameters must have shape ({channels},), "
            f"got {gamma.shape} and {beta.shape}"
        )
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    axes = (0, 2, 3)
    shape = (1, channels, 1, 1)
    if training:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        if count == 1:
            raise DomainError("batchnorm2d training needs more than one value per channel")
        mean_ = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        momentum = running_stats.momentum
        running_stats.mean[...] = (1 - momentum) * running_stats.mean + momentum * mean_.reshape(-1)
        running_stats.var[...] = (1 - momentum) * running_stats.var + momentum * (
            var.reshape(-1) * count / (count - 1)
        )
    else:
        mean_ = running_stats.mean.reshape(shape).astype(x.dtype)
        var = running_stats.var.reshape(shape).astype(x.dtype)
    return _Normalize.apply(
        x,
        as_tensor(gamma, like=x),
        as_tensor(beta, like=x),
        axes=axes,
        param_axes=axes,
        mean=mean_,
        var=var,
        eps=eps,
        batch_stats=training,
        shape=shape,
    )


def layernorm(x, gamma, beta, eps=1e-6):
    """Normalize every token of ``[..., D]`` over its last axis."""
    x = as_tensor(x)
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise DimensionError(
            f"affine parameters must have shape ({dim},), got {gamma.shape} and {beta.shape}"
        )
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    axes = (x.ndim - 1,)
    return _Normalize.apply(
        x,
        as_tensor(gamma, like=x),
        as_tensor(beta, like=x),
        axes=axes,
        param_axes=tuple(range(x.ndim - 1)),
        mean=x.data.mean(axis=-1, keepdims=True),
        var=x.data.var(axis=-1, keepdims=True),
        eps=eps,
        batch_stats=True,
        shape=(dim,),
    )


def mse_loss(prediction, target):
    """Mean squared error between two equally shaped tensors."""
    prediction = as_tensor(prediction)
    target = as_tensor(target, like=prediction)
    if prediction.shape != target.shape:
        raise DimensionError(
            f"prediction {prediction.shape} and target {target.shape} differ"
        )
    diff = prediction - target
    return mean(diff * diff)


__all__ = [
    "RunningStats",
    "Tensor",
    "add",
    "batchnorm2d",
    "conv2d",
    "gelu",
    "global_avg_pool",
    "hflip",
    "layernorm",
    "linear",
    "matmul",
    "mean",
    "mse_loss",
    "mul",
    "neg",
    "power",
    "reshape",
    "softmax",
    "sum",
    "transpose",
]

# src/deepfidelity/ssaaformer/layers.py
"""Building blocks of the SSAAFormer backbone.

Blocks are plain functions over a ``block_params`` mapping of local
parameter names (``"dw.weight"``, ``"norm1.gamma"``, ...) to
:class:`~deepfidelity.tensor.Tensor` objects and, for batch norm layers,
:class:`~deepfidelity.tensor.RunningStats`.
"""
import math

from ..errors import DimensionError
from ..tensor import (
    add,
    batchnorm2d,
    conv2d,
    gelu,
    hflip,
    layernorm,
    linear,
    matmul,
    mul,
    reshape,
    softmax,
    transpose,
)


def ssaa(feature_map, w1, w2):
    """Symmetric spatial attention augmentation.

    Returns ``w1 * A + w2 * hflip(A)``, mixing every position with its
    mirror image across the vertical face axis.

    Parameters
    ----------
    feature_map: Tensor
        Local attention output ``A`` of shape ``[N, C, H, W]``.
    w1, w2: Tensor, float
        Learnable scalar weights of the map and its mirror.

    Example
    -------
    >>> from deepfidelity.tensor import Tensor
    >>> ssaa(Tensor([[1.0, 3.0]]), 0.5, 0.5).data
    array([[2., 2.]], dtype=float32)
    """
    return add(mul(feature_map, w1), mul(hflip(feature_map), w2))


def _depthwise(x, params, name):
    weight = params[f"{name}.weight"]
    return conv2d(
        x,
        weight,
        params[f"{name}.bias"],
        padding=weight.shape[-1] // 2,
        groups=x.shape[1],
    )


def _pointwise(x, params, name):
    return conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"])


def _batchnorm(x, params, name, training):
    return batchnorm2d(
        x,
        params[f"{name}.gamma"],
        params[f"{name}.beta"],
        params[f"{name}.stats"],
        training,
    )


def channel_layernorm(x, gamma, beta):
    """Layer norm over the channels of every position of ``[N, C, H, W]``."""
    tokens = transpose(x, (0, 2, 3, 1))
    return transpose(layernorm(tokens, gamma, beta), (0, 3, 1, 2))


def _check_channels(x, params):
    if x.ndim != 4:
        raise DimensionError(f"block input must be [N, C, H, W], got {x.shape}")
    expected = params["dpe.weight"].shape[0]
    if x.shape[1] != expected:
        raise DimensionError(f"block expects {expected} channels, got {x.shape[1]}")


def conv_block_forward(x, block_params, use_ssaa, training=False):
    """Convolutional block of stages 1 and 2.

    ``x + DPE(x)`` is followed by the local attention branch
    ``PW2(SSAA(DW(PW1(BN(x)))))`` (SSAA only if ``use_ssaa``) and a
    residual pointwise feed forward network.

    Parameters
    ----------
    x: Tensor
        Feature map ``[N, C, H, W]``.
    block_params: dict
        Local parameter mapping of the block.
    use_ssaa: bool
        Apply symmetric spatial attention augmentation to the depthwise
        output.
    training: bool, default=False
        Batch norm mode.

    Returns
    -------
    Tensor
        Feature map of the same shape as ``x``.
    """
    _check_channels(x, block_params)
    x = add(x, _depthwise(x, block_params, "dpe"))

    branch = _batchnorm(x, block_params, "norm1", training)
    branch = _pointwise(branch, block_params, "pw1")
    branch = _depthwise(branch, block_params, "dw")
    if use_ssaa:
        branch = ssaa(branch, block_params["ssaa.w1"], block_params["ssaa.w2"])
    branch = _pointwise(branch, block_params, "pw2")
    x = add(x, branch)

    hidden = _batchnorm(x, block_params, "norm2", training)
    hidden = gelu(_pointwise(hidden, block_params, "ffn.fc1"))
    return add(x, _pointwise(hidden, block_params, "ffn.fc2"))


def attention(query, key, value):
    """Scaled dot product attention ``softmax(Q K^T / sqrt(d_k)) V``.

    Parameters
    ----------
    query, key, value: Tensor
        ``[..., T, d_k]`` token matrices.

    Returns
    -------
    tuple
        Attention output ``[..., T, d_k]`` and weights ``[..., T, T]``.
    """
    d_k = query.shape[-1]
    axes = tuple(range(key.ndim - 2)) + (key.ndim - 1, key.ndim - 2)
    scores = mul(matmul(query, transpose(key, axes)), 1.0 / math.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    return matmul(weights, value), weights


def multi_head_attention(tokens, block_params, heads):
    """Multi head self attention over ``[N, T, C]`` tokens."""
    n, count, channels = tokens.shape
    d_k = channels // heads

    def split(name):
        projected = linear(
            tokens, block_params[f"attn.{name}.weight"], block_params[f"attn.{name}.bias"]
        )
        return transpose(reshape(projected, (n, count, heads, d_k)), (0, 2, 1, 3))

    mixed, _ = attention(split("q"), split("k"), split("v"))
    mixed = reshape(transpose(mixed, (0, 2, 1, 3)), (n, count, channels))
    return linear(mixed, block_params["attn.proj.weight"], block_params["attn.proj.bias"])


def attention_block_forward(x, block_params, heads):
    """Self attention block of stages 3 and 4.

    After the position embedding ``x + DPE(x)`` the map is flattened into
    row-major tokens, passed through pre-norm multi head attention and a
    pre-norm feed forward network (both residual), and folded back.

    Parameters
    ----------
    x: Tensor
        Feature map ``[N, C, H, W]``.
    block_params: dict
        Local parameter mapping of the block.
    heads: int
        Number of attention heads, dividing ``C``.
    """
    _check_channels(x, block_params)
    n, channels, height, width = x.shape
    if channels % heads:
        raise DimensionError(f"{channels} channels not divisible by {heads} heads")
    x = add(x, _depthwise(x, block_params, "dpe"))

    tokens = transpose(reshape(x, (n, channels, height * width)), (0, 2, 1))
    normed = layernorm(tokens, block_params["norm1.gamma"], block_params["norm1.beta"])
    tokens = add(tokens, multi_head_attention(normed, block_params, heads))

    normed = layernorm(tokens, block_params["norm2.gamma"], block_params["norm2.beta"])
    hidden = gelu(
        linear(normed, block_params["ffn.fc1.weight"], block_params["ffn.fc1.bias"])
    )
    tokens = add(
        tokens, linear(hidden, block_params["ffn.fc2.weight"], block_params["ffn.fc2.bias"])
    )
    return reshape(transpose(tokens, (0, 2, 1)), (n, channels, height, width))


def patch_embed_forward(x, block_params, stride, padding, norm, training=False):
    """Strided convolution followed by batch (``"batch"``) or layer norm."""
    x = conv2d(
        x,
        block_params["weight"],
        block_params["bias"],
        stride=stride,
        padding=padding,
    )
    if norm == "batch":
        return _batchnorm(x, block_params, "norm", training)
    return channel_layernorm(x, block_params["norm.gamma"], block_params["norm.beta"])

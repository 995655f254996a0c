# src/deepfidelity/ssaaformer/network.py
"""The four stage SSAAFormer backbone with a scalar regression head.

Stages 1 and 2 stack convolutional blocks (the first ``ssaa_blocks`` of
stage 1 with symmetric spatial attention augmentation), stages 3 and 4
self attention blocks. A 4x4 stride 4 stem and 3x3 stride 2 embeddings
between the stages give feature maps of ``S/4``, ``S/8``, ``S/16`` and
``S/32`` pixels (rounded up).
"""
import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.stats import truncnorm

from ..errors import DimensionError
from ..seeding import make_rng
from ..tensor import RunningStats, Tensor, global_avg_pool, linear, reshape
from .config import STEM_STRIDE, ModelConfig
from .layers import attention_block_forward, conv_block_forward, patch_embed_forward

logger = logging.getLogger(__name__)

INIT_STD = 0.02


@dataclass(frozen=True)
class ParamSpec:
    """Name, shape and initializer kind of one learnable tensor."""

    name: str
    shape: tuple
    init: str


@dataclass(frozen=True)
class BlockSpec:
    """Position of one block inside the backbone."""

    prefix: str
    stage: int
    kind: str
    use_ssaa: bool = False


def _conv_block_layout(prefix, channels, config, use_ssaa):
    hidden = channels * config.ffn_expansion
    specs = [
        ParamSpec(f"{prefix}dpe.weight", (channels, 1, config.dpe_kernel, config.dpe_kernel), "weight"),
        ParamSpec(f"{prefix}dpe.bias", (channels,), "zeros"),
        ParamSpec(f"{prefix}norm1.gamma", (channels,), "ones"),
        ParamSpec(f"{prefix}norm1.beta", (channels,), "zeros"),
        ParamSpec(f"{prefix}pw1.weight", (channels, channels, 1, 1), "weight"),
        ParamSpec(f"{prefix}pw1.bias", (channels,), "zeros"),
        ParamSpec(f"{prefix}dw.weight", (channels, 1, config.dw_kernel, config.dw_kernel), "weight"),
        ParamSpec(f"{prefix}dw.bias", (channels,), "zeros"),
    ]
    if use_ssaa:
        specs += [
            ParamSpec(f"{prefix}ssaa.w1", (), "ones"),
            ParamSpec(f"{prefix}ssaa.w2", (), "zeros"),
        ]
    specs += [
        ParamSpec(f"{prefix}pw2.weight", (channels, channels, 1, 1), "weight"),
        ParamSpec(f"{prefix}pw2.bias", (channels,), "zeros"),
        ParamSpec(f"{prefix}norm2.gamma", (channels,), "ones"),
        ParamSpec(f"{prefix}norm2.beta", (channels,), "zeros"),
        ParamSpec(f"{prefix}ffn.fc1.weight", (hidden, channels, 1, 1), "weight"),
        ParamSpec(f"{prefix}ffn.fc1.bias", (hidden,), "zeros"),
        ParamSpec(f"{prefix}ffn.fc2.weight", (channels, hidden, 1, 1), "weight"),
        ParamSpec(f"{prefix}ffn.fc2.bias", (channels,), "zeros"),
    ]
    return specs


def _attention_block_layout(prefix, channels, config):
    hidden = channels * config.ffn_expansion
    specs = [
        ParamSpec(f"{prefix}dpe.weight", (channels, 1, config.dpe_kernel, config.dpe_kernel), "weight"),
        ParamSpec(f"{prefix}dpe.bias", (channels,), "zeros"),
        ParamSpec(f"{prefix}norm1.gamma", (channels,), "ones"),
        ParamSpec(f"{prefix}norm1.beta", (channels,), "zeros"),
    ]
    for name in ("q", "k", "v", "proj"):
        specs += [
            ParamSpec(f"{prefix}attn.{name}.weight", (channels, channels), "weight"),
            ParamSpec(f"{prefix}attn.{name}.bias", (channels,), "zeros"),
        ]
    specs += [
        ParamSpec(f"{prefix}norm2.gamma", (channels,), "ones"),
        ParamSpec(f"{prefix}norm2.beta", (channels,), "zeros"),
        ParamSpec(f"{prefix}ffn.fc1.weight", (channels, hidden), "weight"),
        ParamSpec(f"{prefix}ffn.fc1.bias", (hidden,), "zeros"),
        ParamSpec(f"{prefix}ffn.fc2.weight", (hidden, channels), "weight"),
        ParamSpec(f"{prefix}ffn.fc2.bias", (channels,), "zeros"),
    ]
    return specs


def _embed_layout(prefix, in_channels, out_channels, kernel):
    return [
        ParamSpec(f"{prefix}weight", (out_channels, in_channels, kernel, kernel), "weight"),
        ParamSpec(f"{prefix}bias", (out_channels,), "zeros"),
        ParamSpec(f"{prefix}norm.gamma", (out_channels,), "ones"),
        ParamSpec(f"{prefix}norm.beta", (out_channels,), "zeros"),
    ]


def block_layout(config):
    """Ordered :class:`BlockSpec` list of every block of ``config``."""
    blocks = []
    for stage, depth in enumerate(config.stage_depths, start=1):
        kind = "conv" if stage <= 2 else "attention"
        for index in range(depth):
            blocks.append(
                BlockSpec(
                    prefix=f"stage{stage}.block{index}.",
                    stage=stage,
                    kind=kind,
                    use_ssaa=stage == 1 and index < config.ssaa_blocks,
                )
            )
    return blocks


def parameter_layout(config):
    """Ordered :class:`ParamSpec` list, a pure function of ``config``."""
    channels = (config.in_channels,) + config.stage_channels
    blocks = block_layout(config)
    specs = []
    for stage in range(1, 5):
        kernel = STEM_STRIDE if stage == 1 else 3
        specs += _embed_layout(f"embed{stage}.", channels[stage - 1], channels[stage], kernel)
        for block in blocks:
            if block.stage != stage:
                continue
            if block.kind == "conv":
                specs += _conv_block_layout(block.prefix, channels[stage], config, block.use_ssaa)
            else:
                specs += _attention_block_layout(block.prefix, channels[stage], config)
    specs += [
        ParamSpec("head.weight", (config.stage_channels[-1], 1), "weight"),
        ParamSpec("head.bias", (1,), "zeros"),
    ]
    return specs


def batchnorm_layout(config):
    """Ordered ``(name, channels)`` pairs of every batch norm layer."""
    layers = [("embed1.norm", config.stage_channels[0]), ("embed2.norm", config.stage_channels[1])]
    for block in block_layout(config):
        if block.kind == "conv":
            channels = config.stage_channels[block.stage - 1]
            layers += [(f"{block.prefix}norm1", channels), (f"{block.prefix}norm2", channels)]
    return layers


class SSAAFormerModel:
    """Parameters, batch norm statistics and forward pass of the backbone.

    Parameters
    ----------
    config: ModelConfig
        Architecture hyperparameters.
    params: collections.OrderedDict
        Learnable tensors keyed by their dotted names.
    buffers: collections.OrderedDict
        :class:`~deepfidelity.tensor.RunningStats` keyed by norm layer name.
    """

    def __init__(self, config, params, buffers):
        self.config = config
        self.params = params
        self.buffers = buffers
        self.training = False
        self.blocks = block_layout(config)

    @property
    def dtype(self):
        """Storage dtype of the parameters."""
        return next(iter(self.params.values())).dtype

    def train(self, mode=True):
        """Switch batch norm layers to batch (``True``) or running statistics."""
        self.training = bool(mode)
        return self

    def eval(self):
        """Shortcut for ``train(False)``."""
        return self.train(False)

    def parameters(self):
        """List of all learnable tensors in layout order."""
        return list(self.params.values())

    def named_parameters(self):
        """``(name, tensor)`` pairs in layout order."""
        return list(self.params.items())

    def parameter_count(self):
        """Total number of learnable scalars."""
        return int(sum(param.size for param in self.params.values()))

    def zero_grad(self):
        """Reset the gradients of all parameters."""
        for param in self.params.values():
            param.zero_grad()

    def block_params(self, prefix):
        """Local parameter mapping of the layer or block at ``prefix``."""
        local = {
            name[len(prefix):]: param
            for name, param in self.params.items()
            if name.startswith(prefix)
        }
        for name, stats in self.buffers.items():
            if name.startswith(prefix):
                local[f"{name[len(prefix):]}.stats"] = stats
        return local

    def state_dict(self):
        """Ordered ``name -> array`` copy of parameters and norm statistics."""
        state = OrderedDict((name, param.data.copy()) for name, param in self.params.items())
        for name, stats in self.buffers.items():
            state[f"{name}.running_mean"] = stats.mean.copy()
            state[f"{name}.running_var"] = stats.var.copy()
        return state

    def load_state_dict(self, state):
        """Copy arrays produced by :meth:`state_dict` into this model."""
        expected = self.state_dict()
        if list(expected) != list(state):
            raise DimensionError("state entries do not match the model layout")
        for name, array in state.items():
            if np.shape(array) != expected[name].shape:
                raise DimensionError(
                    f"'{name}' has shape {np.shape(array)}, expected {expected[name].shape}"
                )
        for name, param in self.params.items():
            param.data[...] = state[name]
        for name, stats in self.buffers.items():
            stats.mean[...] = state[f"{name}.running_mean"]
            stats.var[...] = state[f"{name}.running_var"]

    def checksum(self):
        """SHA-256 hex digest over all parameter and statistics bytes."""
        digest = hashlib.sha256()
        for name, array in self.state_dict().items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(array, dtype="<f4").tobytes())
        return digest.hexdigest()

    def _embed(self, x, stage):
        prefix = f"embed{stage}."
        if stage == 1:
            return patch_embed_forward(
                x, self.block_params(prefix), STEM_STRIDE, 0, "batch", self.training
            )
        norm = "batch" if stage == 2 else "layer"
        return patch_embed_forward(x, self.block_params(prefix), 2, 1, norm, self.training)

    def _block(self, x, block):
        params = self.block_params(block.prefix)
        if block.kind == "conv":
            return conv_block_forward(x, params, block.use_ssaa, self.training)
        return attention_block_forward(x, params, self.config.heads_per_stage34)

    def forward_blocks(self, images):
        """Yield ``(block, feature_map)`` after every block in order."""
        self._check_input(images)
        x = images
        for stage in range(1, 5):
            x = self._embed(x, stage)
            for block in self.blocks:
                if block.stage == stage:
                    x = self._block(x, block)
                    yield block, x

    def forward(self, images):
        """Compute the pooled stage 4 embedding and the head score.

        Returns
        -------
        tuple
            ``(embedding [N, c4], score [N])``.
        """
        x = None
        for _, x in self.forward_blocks(images):
            pass
        embedding = global_avg_pool(x)
        score = linear(embedding, self.params["head.weight"], self.params["head.bias"])
        return embedding, reshape(score, (images.shape[0],))

    def _check_input(self, images):
        size = self.config.input_size
        expected = (self.config.in_channels, size, size)
        if images.ndim != 4 or tuple(images.shape[1:]) != expected:
            raise DimensionError(
                f"images must have shape [N, {expected[0]}, {size}, {size}], got {images.shape}"
            )


def model_init(config, dtype=np.float32):
    """Create a freshly initialized backbone.

    Convolution and linear weights are drawn from a normal distribution
    with standard deviation 0.02 truncated at two standard deviations,
    biases and norm offsets are zero, norm scales one. Every SSAA pair
    starts at ``w1 = 1, w2 = 0``, so the untrained model equals the plain
    baseline with the same seed.

    Parameters
    ----------
    config: ModelConfig
        Architecture, including the initialization seed.
    dtype: numpy.dtype, default=numpy.float32
        Parameter dtype. Double precision is meant for gradient checks.

    Example
    -------
    >>> model = model_init(ModelConfig.tiny())
    >>> model.params["stage1.block0.ssaa.w2"].item()
    0.0
    """
    if not isinstance(config, ModelConfig):
        config = ModelConfig.from_dict(config)
    rng = make_rng(config.seed, "init")
    params = OrderedDict()
    for spec in parameter_layout(config):
        if spec.init == "weight":
            values = truncnorm.rvs(-2.0, 2.0, scale=INIT_STD, size=spec.shape, random_state=rng)
        elif spec.init == "ones":
            values = np.ones(spec.shape)
        else:
            values = np.zeros(spec.shape)
        params[spec.name] = Tensor(values, requires_grad=True, dtype=dtype)
    buffers = OrderedDict(
        (name, RunningStats.fresh(channels, dtype=dtype))
        for name, channels in batchnorm_layout(config)
    )
    model = SSAAFormerModel(config, params, buffers)
    logger.info(
        "initialized SSAAFormer with %d parameters (%d SSAA blocks)",
        model.parameter_count(),
        config.ssaa_blocks,
    )
    return model


def model_forward(model, images):
    """Functional alias of :meth:`SSAAFormerModel.forward`.

    Parameters
    ----------
    model: SSAAFormerModel
        Backbone.
    images: Tensor
        Batch ``[N, in_channels, S, S]`` with ``S == config.input_size``.

    Returns
    -------
    tuple
        ``(embedding [N, c4], score [N])``; the score is unbounded.
    """
    return model.forward(images)

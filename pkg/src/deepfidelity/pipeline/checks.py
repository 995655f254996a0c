# src/deepfidelity/pipeline/checks.py
"""Finite difference checks of every differentiable operation and of the tiny backbone."""
import logging

import numpy as np

from .. import tensor as T
from ..seeding import make_rng
from ..ssaaformer import ModelConfig, model_init
from ..tensor import RunningStats, Tensor, default_dtype, grad_check

logger = logging.getLogger(__name__)

#: Largest accepted relative error of a single operation.
OP_TOLERANCE = 1e-5
#: Largest accepted relative error of the tiny backbone.
MODEL_TOLERANCE = 1e-4
#: Standard deviation of the parameters redrawn for the backbone check.
CHECK_PARAM_STD = 0.5


def _weighted_sum(output, weights):
    return (output * weights).sum()


def _op_cases(rng):
    """``name -> (fn, inputs)`` of the single operation checks."""

    def leaf(*shape):
        return Tensor(rng.standard_normal(shape))

    def weights(*shape):
        return Tensor(rng.standard_normal(shape))

    w_conv = weights(2, 4, 3, 3)
    w_dw = weights(1, 3, 4, 4)
    w_mm = weights(3, 5)
    w_bmm = weights(2, 3, 5)
    w_sm = weights(2, 3, 4)
    w_gelu = weights(3, 4)
    w_ln = weights(2, 3, 6)
    w_bn = weights(2, 3, 4, 4)
    w_flip = weights(2, 3, 5)
    w_pool = weights(2, 3)
    stats = RunningStats.fresh(3, dtype=np.float64)

    return {
        "conv2d": (
            lambda x, k, b: _weighted_sum(T.conv2d(x, k, b, stride=1, padding=1), w_conv),
            [leaf(2, 3, 3, 3), leaf(4, 3, 3, 3), leaf(4)],
        ),
        "conv2d_depthwise_strided": (
            lambda x, k: _weighted_sum(T.conv2d(x, k, stride=2, padding=1, groups=3), w_dw),
            [leaf(1, 3, 7, 7), leaf(3, 1, 3, 3)],
        ),
        "matmul": (lambda a, b: _weighted_sum(T.matmul(a, b), w_mm), [leaf(3, 4), leaf(4, 5)]),
        "matmul_batched": (
            lambda a, b: _weighted_sum(T.matmul(a, b), w_bmm),
            [leaf(2, 3, 4), leaf(2, 4, 5)],
        ),
        "softmax": (lambda x: _weighted_sum(T.softmax(x, axis=-1), w_sm), [leaf(2, 3, 4)]),
        "gelu": (lambda x: _weighted_sum(T.gelu(x), w_gelu), [leaf(3, 4)]),
        "layernorm": (
            lambda x, g, b: _weighted_sum(T.layernorm(x, g, b), w_ln),
            [leaf(2, 3, 6), leaf(6), leaf(6)],
        ),
        "batchnorm2d": (
            lambda x, g, b: _weighted_sum(T.batchnorm2d(x, g, b, stats, training=True), w_bn),
            [leaf(2, 3, 4, 4), leaf(3), leaf(3)],
        ),
        "hflip": (lambda x: _weighted_sum(T.hflip(x), w_flip), [leaf(2, 3, 5)]),
        "global_avg_pool": (
            lambda x: _weighted_sum(T.global_avg_pool(x), w_pool),
            [leaf(2, 3, 4, 4)],
        ),
        "composite": (
            lambda x, k, w: T.matmul(
                T.softmax(T.reshape(T.conv2d(x, k, padding=1), (2, 3, 16)), axis=-1), w
            ).sum(),
            [leaf(2, 3, 4, 4), leaf(3, 3, 3, 3), leaf(16, 2)],
        ),
    }


def op_gradient_errors(seed=42, h=1e-4):
    """Maximal relative gradient error of every operation check."""
    rng = make_rng(seed, "init")
    errors = {}
    with default_dtype(np.float64):
        for name, (fn, inputs) in _op_cases(rng).items():
            errors[name] = grad_check(fn, inputs, h=h)
            logger.debug("%s: %.3e", name, errors[name])
    return errors


def model_gradient_error(seed=42, h=1e-4, n_samples=8, batch=2):
    """Relative gradient error of the MSE loss of the tiny backbone.

    ``n_samples`` entries of every parameter (and of the input) are
    checked. All parameters, biases included, are redrawn with standard
    deviation :data:`CHECK_PARAM_STD`; at the 0.02 initialization the stage
    3 layer norm inputs have a variance below its epsilon.
    """
    rng = make_rng(seed, "data")
    with default_dtype(np.float64):
        config = ModelConfig.tiny(seed=seed)
        model = model_init(config, dtype=np.float64).eval()
        param_rng = make_rng(seed, "init")
        for param in model.parameters():
            param.data[...] = param_rng.normal(0.0, CHECK_PARAM_STD, param.shape)
        images = Tensor(rng.standard_normal((batch, config.in_channels, 16, 16)))
        targets = Tensor(rng.uniform(0.0, 1.0, batch))

        def loss(*_):
            _, score = model.forward(images)
            return T.mse_loss(score, targets)

        return grad_check(
            loss,
            [images] + model.parameters(),
            h=h,
            n_samples=n_samples,
            rng=make_rng(seed, "shuffle"),
        )


def gradient_suite(seed=42, h=1e-4):
    """Run every check.

    Returns
    -------
    tuple
        ``(errors dict, passed bool)``; the backbone entry is named
        ``"ssaaformer_tiny"``.
    """
    errors = op_gradient_errors(seed, h)
    passed = all(error < OP_TOLERANCE for error in errors.values())
    errors["ssaaformer_tiny"] = model_gradient_error(seed, h)
    passed = passed and errors["ssaaformer_tiny"] < MODEL_TOLERANCE
    return errors, passed

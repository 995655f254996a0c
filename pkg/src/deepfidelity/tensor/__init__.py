# src/deepfidelity/tensor/__init__.py
# flake8: noqa
"""Dense tensors, automatic differentiation and the AdamW optimizer."""
from .core import Function, Tensor, default_dtype, get_default_dtype, no_grad
from .functional import (
    RunningStats,
    add,
    batchnorm2d,
    conv2d,
    gelu,
    global_avg_pool,
    hflip,
    layernorm,
    linear,
    matmul,
    mean,
    mse_loss,
    mul,
    reshape,
    softmax,
    transpose,
)
from .gradcheck import grad_check
from .optim import AdamW, AdamWState, adamw_step

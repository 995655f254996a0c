# src/deepfidelity/ssaaformer/__init__.py
# flake8: noqa
"""SSAAFormer backbone: configuration, blocks, model and model files."""
from .config import ModelConfig
from .layers import (
    attention,
    attention_block_forward,
    channel_layernorm,
    conv_block_forward,
    multi_head_attention,
    patch_embed_forward,
    ssaa,
)
from .network import (
    SSAAFormerModel,
    batchnorm_layout,
    block_layout,
    model_forward,
    model_init,
    parameter_layout,
)
from .serialization import load_model, save_model

# src/deepfidelity/ssaaformer/config.py
"""Architecture hyperparameters of the SSAAFormer backbone."""
from dataclasses import asdict, dataclass, field

from ..errors import ConfigurationError

#: Stride of the stem patch embedding.
STEM_STRIDE = 4


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters fully determining the backbone layout.

    Parameters
    ----------
    in_channels: int, default=3
        Image channels.
    input_size: int, default=32
        Side length of the square input, divisible by 16.
    stage_depths: tuple, default=(5, 2, 2, 2)
        Number of blocks of the four stages.
    stage_channels: tuple, default=(16, 32, 64, 128)
        Feature channels of the four stages.
    ssaa_blocks: int, default=5
        Number of leading stage 1 blocks with symmetric spatial attention
        augmentation. ``0`` gives the plain baseline network.
    heads_per_stage34: int, default=2
        Attention heads of the stage 3 and 4 blocks.
    ffn_expansion: int, default=4
        Hidden width factor of the feed forward sub-blocks.
    dw_kernel: int, default=5
        Kernel size of the depthwise local attention convolution.
    dpe_kernel: int, default=3
        Kernel size of the dynamic position embedding.
    seed: int, default=42
        Seed of the parameter initialization.

    Example
    -------
    >>> ModelConfig.desk().stage_depths
    (5, 2, 2, 2)
    >>> ModelConfig(ssaa_blocks=6)
    Traceback (most recent call last):
    ...
    deepfidelity.errors.ConfigurationError: ssaa_blocks=6 exceeds the 5 stage 1 blocks
    """

    in_channels: int = 3
    input_size: int = 32
    stage_depths: tuple = field(default=(5, 2, 2, 2))
    stage_channels: tuple = field(default=(16, 32, 64, 128))
    ssaa_blocks: int = 5
    heads_per_stage34: int = 2
    ffn_expansion: int = 4
    dw_kernel: int = 5
    dpe_kernel: int = 3
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "stage_depths", tuple(int(d) for d in self.stage_depths))
        object.__setattr__(
            self, "stage_channels", tuple(int(c) for c in self.stage_channels)
        )
        if len(self.stage_depths) != 4 or len(self.stage_channels) != 4:
            raise ConfigurationError("exactly four stage depths and channel widths are needed")
        if any(d < 1 for d in self.stage_depths) or any(c < 1 for c in self.stage_channels):
            raise ConfigurationError("stage depths and channels must be positive")
        if self.in_channels < 1:
            raise ConfigurationError(f"in_channels must be positive, got {self.in_channels}")
        if self.input_size < 16 or self.input_size % 16:
            raise ConfigurationError(
                f"input_size must be a positive multiple of 16, got {self.input_size}"
            )
        if not 0 <= self.ssaa_blocks <= self.stage_depths[0]:
            raise ConfigurationError(
                f"ssaa_blocks={self.ssaa_blocks} exceeds the "
                f"{self.stage_depths[0]} stage 1 blocks"
            )
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        if self.heads_per_stage34 < 1:
            raise ConfigurationError("heads_per_stage34 must be positive")
        for channels in self.stage_channels[2:]:
            if channels % self.heads_per_stage34:
                raise ConfigurationError(
                    f"{channels} channels not divisible by {self.heads_per_stage34} heads"
                )
        for name in ("ffn_expansion", "dw_kernel", "dpe_kernel"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("dw_kernel", "dpe_kernel"):
            if getattr(self, name) % 2 == 0:
                raise ConfigurationError(f"{name} must be odd to keep the spatial size")

    @classmethod
    def desk(cls, **overrides):
        """Desk scale preset: 32 pixel inputs, depths 5/2/2/2."""
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides):
        """Full scale preset: 224 pixel inputs, depths 5/4/8/3."""
        values = dict(
            input_size=224,
            stage_depths=(5, 4, 8, 3),
            stage_channels=(64, 128, 320, 512),
            heads_per_stage34=8,
        )
        values.update(overrides)
        return cls(**values)

    @classmethod
    def tiny(cls, **overrides):
        """Gradient check preset: 16 pixel inputs, one block per stage."""
        values = dict(
            input_size=16,
            stage_depths=(1, 1, 1, 1),
            stage_channels=(4, 4, 8, 8),
            ssaa_blocks=1,
            heads_per_stage34=2,
            ffn_expansion=2,
        )
        values.update(overrides)
        return cls(**values)

    def stage_sizes(self):
        """Spatial side length of the feature maps of each stage."""
        size = self.input_size // STEM_STRIDE
        sizes = [size]
        for _ in range(3):
            size = (size + 1) // 2
            sizes.append(size)
        return tuple(sizes)

    def to_dict(self):
        """Plain ``dict`` representation."""
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        """Inverse of :meth:`to_dict`, ignoring unknown keys."""
        known = {name: values[name] for name in cls.__dataclass_fields__ if name in values}
        return cls(**known)

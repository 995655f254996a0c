# src/deepfidelity/pipeline/training.py
"""Backbone training on fidelity targets."""
import fnmatch
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from tqdm import tqdm

from ..errors import ConfigurationError, DomainError
from ..fidelity import Label
from ..seeding import make_rng
from ..ssaaformer import model_init, save_model
from ..tensor import AdamW, Tensor, mse_loss
from ..tensor.optim import DEFAULT_LEARNING_RATE, DEFAULT_WEIGHT_DECAY
from .images import load_images

logger = logging.getLogger(__name__)

TARGET_MODES = ("fidelity", "binary")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings of :func:`train_backbone`.

    Parameters
    ----------
    epochs: int, default=15
        Passes over the training records.
    batch_size: int, default=16
        Samples per AdamW step.
    lr: float, default=1.2e-3
        Learning rate.
    weight_decay: float, default=0.05
        Decoupled weight decay.
    seed: int, default=42
        Seed of the batch order and the flip augmentation.
    target_mode: str, default="fidelity"
        ``"fidelity"`` regresses the mapped fidelity targets, ``"binary"``
        the plain labels (1 for real, 0 for fake).
    hflip_augment: bool, default=False
        Mirror every training sample with probability 0.5.
    frozen: tuple, default=()
        :mod:`fnmatch` patterns of parameter names excluded from updates,
        e.g. ``("*.ssaa.*",)``.
    workers: int, default=1
        Image reader threads.
    """

    epochs: int = 15
    batch_size: int = 16
    lr: float = DEFAULT_LEARNING_RATE
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    seed: int = 42
    target_mode: str = "fidelity"
    hflip_augment: bool = False
    frozen: tuple = field(default=())
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "frozen", tuple(self.frozen))
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigurationError("lr and weight_decay must be non-negative")
        if self.target_mode not in TARGET_MODES:
            raise ConfigurationError(
                f"target_mode must be one of {TARGET_MODES}, got '{self.target_mode}'"
            )
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be positive, got {self.workers}")


@dataclass
class TrainResult:
    """Outcome of :func:`train_backbone`.

    Parameters
    ----------
    model: ~deepfidelity.ssaaformer.SSAAFormerModel
        Trained backbone in evaluation mode.
    model_path: pathlib.Path, None
        File the model was saved to.
    losses: list
        Mean training loss of every epoch.
    """

    model: object
    model_path: Path = None
    losses: list = field(default_factory=list)


def training_targets(records, target_mode="fidelity"):
    """Regression targets of ``records`` as a float array."""
    if target_mode == "binary":
        return np.array([1.0 if r.label is Label.REAL else 0.0 for r in records])
    if target_mode != "fidelity":
        raise ConfigurationError(f"unknown target_mode '{target_mode}'")
    missing = [r.image_path for r in records if r.fidelity_target is None]
    if missing:
        raise DomainError(
            f"{len(missing)} records lack fidelity targets, map the manifest first "
            f"(e.g. '{missing[0]}')"
        )
    return np.array([r.fidelity_target for r in records])


def trainable_parameters(model, frozen=()):
    """Parameters whose names match none of the ``frozen`` patterns."""
    return [
        param
        for name, param in model.named_parameters()
        if not any(fnmatch.fnmatchcase(name, pattern) for pattern in frozen)
    ]


def train_backbone(records, model_config, train_config=None, model_path=None, progress=True):
    """Train a freshly initialized backbone with an MSE loss on its head.

    Parameters
    ----------
    records: ~collections.abc.Sequence
        Training :class:`~deepfidelity.fidelity.FidelityRecord` objects.
    model_config: ~deepfidelity.ssaaformer.ModelConfig
        Architecture and initialization seed.
    train_config: TrainConfig, None, default=None
        Optimization settings, defaults if omitted.
    model_path: str, ~pathlib.Path, None, default=None
        Save the trained model here if given.
    progress: bool, default=True
        Show a progress bar per epoch.

    Returns
    -------
    TrainResult
        Model, its path and the per epoch losses.

    Raises
    ------
    ~deepfidelity.errors.ImageReadError
        If an image can not be read.
    """
    train_config = train_config or TrainConfig()
    records = list(records)
    if not records:
        raise DomainError("no training records")
    targets = training_targets(records, train_config.target_mode).astype(np.float32)
    images = load_images(
        [r.image_path for r in records], model_config.input_size, train_config.workers
    )

    model = model_init(model_config)
    model.train()
    optimizer = AdamW(
        trainable_parameters(model, train_config.frozen),
        lr=train_config.lr,
        weight_decay=train_config.weight_decay,
    )
    rng = make_rng(train_config.seed, "shuffle")
    n = len(records)
    losses = []
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        batches = range(0, n, train_config.batch_size)
        for start in tqdm(batches, desc=f"epoch {epoch}", leave=False, disable=not progress):
            index = order[start:start + train_config.batch_size]
            batch = images[index]
            if train_config.hflip_augment:
                flip = rng.random(index.size) < 0.5
                batch = np.where(flip[:, None, None, None], batch[..., ::-1], batch)
            _, score = model.forward(Tensor(batch))
            loss = mse_loss(score, Tensor(targets[index]))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * index.size
        losses.append(total / n)
        if not math.isfinite(losses[-1]):
            raise DomainError(f"training diverged in epoch {epoch}")
        logger.info("epoch %d/%d: loss %.6f", epoch, train_config.epochs, losses[-1])

    model.eval()
    if model_path is not None:
        model_path = save_model(model, model_path)
    return TrainResult(model=model, model_path=model_path, losses=losses)

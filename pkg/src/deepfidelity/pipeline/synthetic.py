# src/deepfidelity/pipeline/synthetic.py
"""Procedural face-like dataset.

Real samples are bilaterally symmetric drawings of a head with mirrored
eyes, a nose and a mouth. Fake samples break the symmetry on one side of
the face with a local warp and a patch swap. A Gaussian blur drawn per
sample degrades the quality of both classes.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates
from tqdm import tqdm

from ..errors import ConfigurationError
from ..fidelity import FidelityRecord, Label, proxy_quality
from ..seeding import make_rng
from .images import quantize, write_pixels
from .manifest import ingest_manifest, write_manifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
IMAGE_DIR = "images"


@dataclass(frozen=True)
class SynthConfig:
    """Size and difficulty of a synthetic dataset.

    Parameters
    ----------
    n_real, n_fake: int, default=250
        Samples per class.
    image_size: int, default=32
        Side length of the square images, at least 16.
    blur_levels: tuple, default=(0.0, 0.5, 1.0, 1.5)
        Gaussian blur deviations (pixels), one drawn per sample.
    asymmetry_strength: float, default=1.0
        Scale of the one sided perturbations of fake samples.
    seed: int, default=42
        Seed of the generator.
    """

    n_real: int = 250
    n_fake: int = 250
    image_size: int = 32
    blur_levels: tuple = field(default=(0.0, 0.5, 1.0, 1.5))
    asymmetry_strength: float = 1.0
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "blur_levels", tuple(float(b) for b in self.blur_levels))
        if self.n_real < 0 or self.n_fake < 0:
            raise ConfigurationError("sample counts must be non-negative")
        if self.image_size < 16:
            raise ConfigurationError(f"image_size must be at least 16, got {self.image_size}")
        if not self.blur_levels or any(level < 0 for level in self.blur_levels):
            raise ConfigurationError("blur_levels must be a non empty list of non-negative values")
        if self.asymmetry_strength < 0:
            raise ConfigurationError("asymmetry_strength must be non-negative")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")


def _grid(size):
    """Coordinates in ``(-1, 1)``, mirror symmetric in the column axis."""
    centers = (np.arange(size) + 0.5 - size / 2.0) / (size / 2.0)
    return np.meshgrid(centers, centers, indexing="ij")


def _ellipse(v, u, center_v, half_u, radius_v, radius_u):
    """Mask of the ellipse pair at ``u = +-half_u`` (a single one if 0)."""
    return ((v - center_v) / radius_v) ** 2 + ((np.abs(u) - half_u) / radius_u) ** 2 <= 1.0


def draw_face(size, rng):
    """Draw one bilaterally symmetric face as ``[3, S, S]`` in ``[0, 1]``."""
    v, u = _grid(size)
    background = rng.uniform(0.05, 0.35, 3)
    skin = rng.uniform(0.55, 0.9, 3)
    features = rng.uniform(0.0, 0.25, 3)
    image = np.empty((3, size, size))
    image[:] = background[:, None, None]

    head = _ellipse(v, u, 0.0, 0.0, rng.uniform(0.75, 0.92), rng.uniform(0.55, 0.75))
    eye_v = rng.uniform(-0.35, -0.15)
    eyes = _ellipse(v, u, eye_v, rng.uniform(0.22, 0.34), 0.12, rng.uniform(0.1, 0.16))
    nose = (np.abs(u) <= 0.06) & (v > eye_v + 0.1) & (v < rng.uniform(0.15, 0.3))
    mouth = _ellipse(v, u, rng.uniform(0.4, 0.52), 0.0, 0.07, rng.uniform(0.2, 0.32))

    image[:, head] = skin[:, None]
    for mask in (eyes, nose, mouth):
        image[:, mask] = features[:, None]

    noise = rng.normal(0.0, 0.02, (3, size, size))
    image += 0.5 * (noise + noise[..., ::-1])
    return np.clip(image, 0.0, 1.0)


def _one_sided_warp(image, rng, strength):
    size = image.shape[-1]
    v, u = _grid(size)
    side = rng.choice([-1.0, 1.0])
    center_v, center_u = rng.uniform(-0.4, 0.2), side * rng.uniform(0.2, 0.4)
    bump = np.exp(-((v - center_v) ** 2 + (u - center_u) ** 2) / (2 * 0.18**2))
    bump[np.sign(u) != side] = 0.0
    shift = strength * 0.12 * size * bump
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    coords = [rows - 0.6 * shift, cols - side * shift]
    return np.stack(
        [map_coordinates(channel, coords, order=1, mode="nearest") for channel in image]
    )


def _patch_swap(image, rng, strength):
    size = image.shape[-1]
    patch = max(size // 4, 2)
    half = size // 2
    left = rng.random() < 0.5
    col = int(rng.integers(0, half - patch + 1)) + (0 if left else size - half)
    row_a, row_b = rng.choice(size - patch + 1, size=2, replace=False)
    weight = min(float(strength), 1.0)
    swapped = image.copy()
    block_a = image[:, row_a:row_a + patch, col:col + patch]
    block_b = image[:, row_b:row_b + patch, col:col + patch]
    swapped[:, row_a:row_a + patch, col:col + patch] = (1 - weight) * block_a + weight * block_b
    swapped[:, row_b:row_b + patch, col:col + patch] = (1 - weight) * block_b + weight * block_a
    return swapped


def forge(image, rng, strength):
    """Break the left-right symmetry of ``image`` on one side."""
    if strength == 0:
        return image.copy()
    return np.clip(_patch_swap(_one_sided_warp(image, rng, strength), rng, strength), 0.0, 1.0)


def degrade(image, sigma):
    """Gaussian blur of every channel with deviation ``sigma`` pixels."""
    if sigma <= 0:
        return image
    return gaussian_filter(image, sigma=(0.0, sigma, sigma), mode="reflect")


def lr_asymmetry(image):
    """Mean absolute difference between an image and its mirror image."""
    image = np.asarray(image, dtype=np.float64)
    return float(np.mean(np.abs(image - image[..., ::-1])))


def gen_synthetic(config, out_dir, progress=True):
    """Generate a dataset and its manifest.

    Parameters
    ----------
    config: SynthConfig
        Dataset size and difficulty.
    out_dir: str, ~pathlib.Path
        Target directory. Images are written to its ``images``
        sub-directory, the manifest to ``manifest.csv``.
    progress: bool, default=True
        Show a progress bar.

    Returns
    -------
    pathlib.Path
        Path of the written manifest, with the proxy quality of every image.
    """
    out_dir = Path(out_dir)
    image_dir = out_dir / IMAGE_DIR
    image_dir.mkdir(parents=True, exist_ok=True)
    rng = make_rng(config.seed, "data")

    plan = [(Label.REAL, index) for index in range(config.n_real)]
    plan += [(Label.FAKE, index) for index in range(config.n_fake)]
    records = []
    for label, index in tqdm(plan, desc="generating", disable=not progress):
        image = draw_face(config.image_size, rng)
        if label is Label.FAKE:
            image = forge(image, rng, config.asymmetry_strength)
        image = quantize(degrade(image, float(rng.choice(config.blur_levels))))
        path = image_dir / f"{label.value}_{index:05d}.png"
        write_pixels(image, path)
        records.append(
            FidelityRecord(image_path=str(path), label=label, quality_raw=proxy_quality(image))
        )
    manifest = write_manifest(records, out_dir / MANIFEST_NAME)
    logger.info(
        "generated %d real and %d fake images in %s", config.n_real, config.n_fake, out_dir
    )
    return manifest


def split_records(records, test_fraction, seed):
    """Stratified random split into ``(train, test)`` record lists."""
    if not 0 < test_fraction < 1:
        raise ConfigurationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = make_rng(seed, "split")
    is_test = np.zeros(len(records), dtype=bool)
    for label in Label:
        indices = np.array([i for i, record in enumerate(records) if record.label is label])
        if indices.size == 0:
            continue
        n_test = int(round(test_fraction * indices.size))
        is_test[rng.permutation(indices)[:n_test]] = True
    train = [record for record, test in zip(records, is_test) if not test]
    test = [record for record, test in zip(records, is_test) if test]
    return train, test


def split_manifest(manifest_path, test_fraction=0.2, seed=42):
    """Split a manifest into ``train.csv`` and ``test.csv`` next to it.

    Returns
    -------
    tuple
        Paths of the training and test manifests.
    """
    manifest_path = Path(manifest_path)
    train, test = split_records(ingest_manifest(manifest_path), test_fraction, seed)
    directory = manifest_path.parent
    return (
        write_manifest(train, directory / "train.csv"),
        write_manifest(test, directory / "test.csv"),
    )

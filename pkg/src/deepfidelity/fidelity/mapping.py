# src/deepfidelity/fidelity/mapping.py
"""Quality to fidelity mapping.

Each class is squeezed into its own score range: fake samples into
``[0, 0.4]`` and real samples into ``[0.6, 1]``. Inside a range a higher
normalized quality gives a higher score.
"""
import enum
import logging
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

logger = logging.getLogger(__name__)

#: Upper end of the fake range.
FAKE_UPPER = 0.4
#: Lower end of the real range.
REAL_LOWER = 0.6
#: Decision threshold, the midpoint of the gap between both ranges.
THRESHOLD = 0.5

MinMax = namedtuple("MinMax", ["min", "max"])
MinMax.__doc__ = """Normalization statistics of one class."""


class Label(str, enum.Enum):
    """Class label of a sample."""

    REAL = "real"
    FAKE = "fake"

    @classmethod
    def parse(cls, value):
        """Case insensitive conversion of ``value`` into a label.

        Example
        -------
        >>> Label.parse(" REAL ")
        <Label.REAL: 'real'>
        """
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError as error:
            raise DomainError(f"unknown label '{value}', expected 'real' or 'fake'") from error


@dataclass(frozen=True)
class FidelityRecord:
    """One sample of a manifest.

    Parameters
    ----------
    image_path: str
        Path of the image file.
    label: Label
        Ground truth class.
    quality_raw: float
        Quality score as delivered by the quality scorer.
    quality_norm: float, None
        Class-wise normalized quality in ``[0, 1]``, once mapped.
    fidelity_target: float, None
        Fidelity regression target, once mapped.
    """

    image_path: str
    label: Label
    quality_raw: float
    quality_norm: float = None
    fidelity_target: float = None

    def mapped(self, quality_norm):
        """Copy carrying ``quality_norm`` and the resulting fidelity target."""
        return FidelityRecord(
            image_path=self.image_path,
            label=self.label,
            quality_raw=self.quality_raw,
            quality_norm=float(quality_norm),
            fidelity_target=map_to_fidelity(quality_norm, self.label),
        )


def quality_stats(raw_scores):
    """:class:`MinMax` of ``raw_scores``.

    Raises
    ------
    DomainError
        If ``raw_scores`` is empty or contains non finite values.
    """
    scores = np.asarray(raw_scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise DomainError("cannot normalize an empty quality sequence")
    if not np.all(np.isfinite(scores)):
        raise DomainError("quality scores must be finite")
    return MinMax(float(scores.min()), float(scores.max()))


def normalize_quality(raw_scores, stats=None):
    """Min-max normalize quality scores into ``[0, 1]``.

    Parameters
    ----------
    raw_scores: ~collections.abc.Sequence
        Raw quality scores of one class.
    stats: MinMax, tuple, None, default=None
        ``(min, max)`` of the training split. Computed from ``raw_scores``
        if omitted. Scores outside of the range are clamped.

    Returns
    -------
    numpy.ndarray
        Normalized scores. A degenerate range ``min == max`` maps every
        score to ``0.5``.

    Example
    -------
    >>> normalize_quality([2, 4, 6])
    array([0. , 0.5, 1. ])
    >>> normalize_quality([3, 3])
    array([0.5, 0.5])
    """
    computed = quality_stats(raw_scores)
    scores = np.asarray(raw_scores, dtype=np.float64).reshape(-1)
    low, high = computed if stats is None else MinMax(*map(float, stats))
    if low > high:
        raise DomainError(f"invalid quality statistics: min {low} > max {high}")
    if high == low:
        return np.full(scores.shape, 0.5)
    normalized = (scores - low) / (high - low)
    clamped = np.clip(normalized, 0.0, 1.0)
    if stats is not None and np.any(clamped != normalized):
        logger.warning(
            "%d quality scores outside of [%g, %g] were clamped",
            int(np.count_nonzero(clamped != normalized)),
            low,
            high,
        )
    return clamped


def class_quality_stats(records):
    """Per class :class:`MinMax` of the raw quality of ``records``.

    Returns
    -------
    dict
        ``{Label: MinMax}`` for every class present.
    """
    stats = {}
    for label in Label:
        scores = [record.quality_raw for record in records if record.label is label]
        if scores:
            stats[label] = quality_stats(scores)
    return stats


def map_records(records, stats=None):
    """Normalize per class and attach fidelity targets.

    Parameters
    ----------
    records: ~collections.abc.Sequence
        :class:`FidelityRecord` objects, order is preserved.
    stats: dict, None, default=None
        ``{Label: MinMax}`` from the training split, see
        :func:`class_quality_stats`. Computed from ``records`` if omitted.

    Returns
    -------
    list
        Mapped copies of ``records``.
    """
    records = list(records)
    if stats is None:
        stats = class_quality_stats(records)
    mapped = [None] * len(records)
    for label in Label:
        indices = [i for i, record in enumerate(records) if record.label is label]
        if not indices:
            continue
        if label not in stats:
            raise DomainError(f"no quality statistics for class '{label.value}'")
        normalized = normalize_quality([records[i].quality_raw for i in indices], stats[label])
        for index, value in zip(indices, normalized):
            mapped[index] = records[index].mapped(value)
    return mapped


def map_to_fidelity(quality_norm, label):
    """Map a normalized quality into the score range of ``label``.

    Parameters
    ----------
    quality_norm: float
        Normalized quality in ``[0, 1]``.
    label: Label, str
        Sample class.

    Returns
    -------
    float
        ``0.6 + 0.4 * q`` for real samples, ``0.4 * q`` for fake ones.

    Example
    -------
    >>> map_to_fidelity(0.0, "real")
    0.6
    >>> map_to_fidelity(1.0, Label.FAKE)
    0.4
    """
    label = Label.parse(label)
    quality_norm = float(quality_norm)
    if not 0.0 <= quality_norm <= 1.0:
        raise DomainError(f"normalized quality must lie in [0, 1], got {quality_norm}")
    if label is Label.REAL:
        return REAL_LOWER + (1.0 - REAL_LOWER) * quality_norm
    return FAKE_UPPER * quality_norm


def threshold_classify(score):
    """Label of a fidelity score; ties at ``0.5`` count as fake.

    Example
    -------
    >>> threshold_classify(0.7).value
    'real'
    >>> threshold_classify(0.5).value
    'fake'
    """
    score = float(score)
    if math.isnan(score):
        raise DomainError("cannot classify a NaN score")
    return Label.REAL if score > THRESHOLD else Label.FAKE


def bucket_index(quality_norm, n_buckets=4):
    """Index of the quality bucket holding ``quality_norm``.

    Buckets are half open ``[k/n, (k+1)/n)`` except for the last, which
    also holds ``1.0``.
    """
    if n_buckets < 1:
        raise DomainError(f"n_buckets must be positive, got {n_buckets}")
    return min(int(math.floor(float(quality_norm) * n_buckets)), n_buckets - 1)


def bucket_by_quality(records, n_buckets=4):
    """Partition record indices by normalized quality.

    Parameters
    ----------
    records: ~collections.abc.Sequence
        Mapped :class:`FidelityRecord` objects.
    n_buckets: int, default=4
        Number of equally wide buckets over ``[0, 1]``.

    Returns
    -------
    list
        ``n_buckets`` lists of record indices, in input order.

    Example
    -------
    >>> records = [
    ...     FidelityRecord("a.png", Label.REAL, q, quality_norm=q)
    ...     for q in (0.1, 0.25, 0.6, 1.0)
    ... ]
    >>> bucket_by_quality(records)
    [[0], [1], [2], [3]]
    """
    if n_buckets < 1:
        raise DomainError(f"n_buckets must be positive, got {n_buckets}")
    buckets = [[] for _ in range(n_buckets)]
    for index, record in enumerate(records):
        if record.quality_norm is None:
            raise DomainError(f"record '{record.image_path}' has no normalized quality")
        buckets[bucket_index(record.quality_norm, n_buckets)].append(index)
    return buckets

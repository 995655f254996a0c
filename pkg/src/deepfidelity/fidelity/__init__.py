# src/deepfidelity/fidelity/__init__.py
# flake8: noqa
"""Perceptual forgery fidelity: quality normalization, mapping and buckets."""
from .mapping import (
    FAKE_UPPER,
    REAL_LOWER,
    THRESHOLD,
    FidelityRecord,
    Label,
    MinMax,
    bucket_by_quality,
    bucket_index,
    class_quality_stats,
    map_records,
    map_to_fidelity,
    normalize_quality,
    quality_stats,
    threshold_classify,
)
from .quality import proxy_quality, to_grayscale

# tests/pipeline/__init__.py
"""Tests of deepfidelity.pipeline."""

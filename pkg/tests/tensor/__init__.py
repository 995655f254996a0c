# tests/tensor/__init__.py
"""Tests of deepfidelity.tensor."""

# tests/ssaaformer/__init__.py
"""Tests of deepfidelity.ssaaformer."""

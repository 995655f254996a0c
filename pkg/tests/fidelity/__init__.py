# tests/fidelity/__init__.py
"""Tests of deepfidelity.fidelity."""

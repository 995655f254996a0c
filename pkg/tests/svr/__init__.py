# tests/svr/__init__.py
"""Tests of deepfidelity.svr."""

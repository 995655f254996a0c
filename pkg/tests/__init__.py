# tests/__init__.py
"""deepfidelity's (pytest) package."""

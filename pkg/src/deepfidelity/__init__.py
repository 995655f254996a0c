# src/deepfidelity/__init__.py
"""deepfidelity."""
from importlib.metadata import version

__version__ = version(__name__)

# tests/test_version.py
"""Version access of the installed package."""
from deepfidelity import __version__


def test_version_access():
    """Test for correct package version."""
    assert __version__ == "0.1.0"

# src/deepfidelity/errors.py
"""Exceptions raised throughout deepfidelity.

Every error derives from :class:`DeepFidelityError` so callers (and the
command line interface) can tell library failures apart from genuine bugs.
The builtin base classes are mixed in so ``except ValueError`` style handling
keeps working.
"""


class DeepFidelityError(Exception):
    """Base class of all deepfidelity errors."""


class DimensionError(DeepFidelityError, ValueError):
    """Tensor or vector shapes do not fit together."""


class ConfigurationError(DeepFidelityError, ValueError):
    """A configuration object or layer parameterization is invalid."""


class DomainError(DeepFidelityError, ValueError):
    """An argument lies outside the domain of the operation."""


class ContractError(DeepFidelityError, RuntimeError):
    """An operation was called in a state its contract does not allow."""


class FormatError(DeepFidelityError, ValueError):
    """A serialized model file is corrupt or of an unknown layout.

    Parameters
    ----------
    message: str
        Human readable description.
    tensor_name: str, None, default=None
        Name of the tensor entry that failed to parse, if known.
    """

    def __init__(self, message, tensor_name=None):
        if tensor_name is not None:
            message = f"{message} (tensor '{tensor_name}')"
        super().__init__(message)
        self.tensor_name = tensor_name


class ManifestParseError(DeepFidelityError, ValueError):
    """A manifest or feature csv row could not be parsed.

    Parameters
    ----------
    message: str
        Human readable description.
    line_number: int, None, default=None
        1-based line number in the file (the header is line 1).
    """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ImageReadError(DeepFidelityError, OSError):
    """An image referenced by a manifest could not be read."""

    def __init__(self, path, reason=""):
        message = f"cannot read image '{path}'"
        if reason:
            message = f"{message}: {reason}"
        super().__init__(message)
        self.path = str(path)

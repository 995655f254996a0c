# src/deepfidelity/svr/serialization.py
"""Binary regressor files.

Layout (little endian)::

    b"SVRM" | u32 version | u32 d | u32 n_sv | f64 sigma | f64 bias
    f64 mean[d] | f64 std[d] | f64 support_vectors[n_sv, d] | f64 coefs[n_sv]
    u32 CRC32 of all preceding bytes
"""
import logging
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .smo import SVRModel

logger = logging.getLogger(__name__)

MAGIC = b"SVRM"
VERSION = 1
_HEADER = struct.Struct("<4sIIIdd")


def dump_svr(model):
    """Serialize ``model`` into ``bytes``."""
    body = bytearray(
        _HEADER.pack(
            MAGIC, VERSION, model.dimension, model.n_support, float(model.sigma), float(model.bias)
        )
    )
    for array in (
        model.feature_mean,
        model.feature_std,
        model.support_vectors.reshape(model.n_support, model.dimension),
        model.dual_coefs,
    ):
        body += np.ascontiguousarray(array, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    return bytes(body)


def parse_svr(data):
    """Inverse of :func:`dump_svr`, raising :class:`FormatError`."""
    if len(data) < _HEADER.size + 4:
        raise FormatError("file truncated while reading the header")
    magic, version, dimension, n_support, sigma, bias = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("not a regressor file (bad magic)")
    if version != VERSION:
        raise FormatError(f"unsupported regressor file version {version}")
    expected = _HEADER.size + 8 * (2 * dimension + n_support * dimension + n_support) + 4
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes, got {len(data)}")
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != stored_crc:
        raise FormatError("checksum mismatch")

    values = np.frombuffer(data[_HEADER.size:-4], dtype="<f8").astype(np.float64)
    mean, values = values[:dimension], values[dimension:]
    std, values = values[:dimension], values[dimension:]
    vectors, coefs = values[: n_support * dimension], values[n_support * dimension:]
    if not sigma > 0 or np.any(std <= 0):
        raise FormatError("non positive kernel width or feature deviation")
    return SVRModel(
        support_vectors=vectors.reshape(n_support, dimension),
        dual_coefs=coefs,
        bias=bias,
        sigma=sigma,
        feature_mean=mean,
        feature_std=std,
    )


def save_svr(model, path):
    """Write ``model`` to ``path``."""
    path = Path(path)
    path.write_bytes(dump_svr(model))
    logger.info("saved SVR with %d support vectors to %s", model.n_support, path)
    return path


def load_svr(path):
    """Read a regressor written by :func:`save_svr`."""
    return parse_svr(Path(path).read_bytes())

# src/deepfidelity/ssaaformer/serialization.py
"""Binary model files.

Layout (little endian)::

    b"SSAF" | u32 version | u32 tensor count
    per tensor: u32 name length | UTF-8 name | u32 rank | u32 dims... | f32 payload
    u32 CRC32 of all payload bytes

The first entry, ``meta.config``, stores the :class:`ModelConfig` as a float
vector (integers below 2**16 are exact); the seed is split into four 16 bit
limbs. Parameters follow in layout order, then batch norm statistics.
"""
import logging
import struct
import zlib
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, FormatError
from .config import ModelConfig
from .network import model_init

logger = logging.getLogger(__name__)

MAGIC = b"SSAF"
VERSION = 1
CONFIG_ENTRY = "meta.config"
_SEED_LIMBS = 4


def _config_vector(config):
    values = [config.in_channels, config.input_size]
    values += list(config.stage_depths) + list(config.stage_channels)
    values += [
        config.ssaa_blocks,
        config.heads_per_stage34,
        config.ffn_expansion,
        config.dw_kernel,
        config.dpe_kernel,
    ]
    values += [(config.seed >> (16 * limb)) & 0xFFFF for limb in range(_SEED_LIMBS)]
    return np.asarray(values, dtype="<f4")


def _config_from_vector(vector):
    values = [int(v) for v in vector]
    if len(values) != 15 + _SEED_LIMBS:
        raise FormatError(f"config entry has {len(values)} values", CONFIG_ENTRY)
    seed = sum(limb << (16 * index) for index, limb in enumerate(values[15:]))
    try:
        return ModelConfig(
            in_channels=values[0],
            input_size=values[1],
            stage_depths=tuple(values[2:6]),
            stage_channels=tuple(values[6:10]),
            ssaa_blocks=values[10],
            heads_per_stage34=values[11],
            ffn_expansion=values[12],
            dw_kernel=values[13],
            dpe_kernel=values[14],
            seed=seed,
        )
    except ConfigurationError as error:
        raise FormatError(f"invalid stored configuration: {error}", CONFIG_ENTRY) from error


def save_model(model, path):
    """Write ``model`` to ``path`` in the ``SSAF`` format.

    Double precision models are stored in single precision.
    """
    entries = OrderedDict([(CONFIG_ENTRY, _config_vector(model.config))])
    entries.update(model.state_dict())

    header = bytearray(MAGIC)
    header += struct.pack("<II", VERSION, len(entries))
    body = bytearray()
    crc = 0
    for name, array in entries.items():
        payload = np.asarray(array, dtype="<f4")
        encoded = name.encode("utf-8")
        body += struct.pack("<I", len(encoded)) + encoded
        body += struct.pack("<I", payload.ndim)
        body += struct.pack(f"<{payload.ndim}I", *payload.shape)
        raw = payload.tobytes()
        body += raw
        crc = zlib.crc32(raw, crc)
    path = Path(path)
    path.write_bytes(bytes(header + body + struct.pack("<I", crc)))
    logger.info("saved model with %d entries to %s", len(entries), path)
    return path


class _Reader:
    """Bounds checked cursor over the file bytes."""

    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, count, what, tensor_name=None):
        end = self.offset + count
        if end > len(self.data):
            raise FormatError(f"file truncated while reading {what}", tensor_name)
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what, tensor_name=None):
        return struct.unpack("<I", self.take(4, what, tensor_name))[0]


def _read_entries(data):
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("not a model file (bad magic)")
    version = reader.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    count = reader.u32("tensor count")
    entries = OrderedDict()
    crc = 0
    for index in range(count):
        label = f"#{index}"
        length = reader.u32("name length", label)
        try:
            name = reader.take(length, "name", label).decode("utf-8")
        except UnicodeDecodeError as error:
            raise FormatError("tensor name is not valid UTF-8", label) from error
        rank = reader.u32("rank", name)
        shape = tuple(reader.u32("dimension", name) for _ in range(rank))
        if any(dim == 0 for dim in shape):
            raise FormatError(f"zero sized dimension in shape {shape}", name)
        raw = reader.take(4 * int(np.prod(shape, dtype=np.int64)), "payload", name)
        crc = zlib.crc32(raw, crc)
        entries[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    stored_crc = reader.u32("checksum")
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} unexpected trailing bytes")
    if stored_crc != crc:
        raise FormatError("payload checksum mismatch")
    return entries


def load_model(path):
    """Read a model written by :func:`save_model`.

    Raises
    ------
    FormatError
        On a bad magic or version, truncation, checksum mismatch or tensor
        headers inconsistent with the stored configuration. No partially
        filled model is returned.
    """
    entries = _read_entries(Path(path).read_bytes())
    if CONFIG_ENTRY not in entries:
        raise FormatError("missing configuration entry", CONFIG_ENTRY)
    config = _config_from_vector(entries.pop(CONFIG_ENTRY).reshape(-1))

    model = model_init(config)
    expected = model.state_dict()
    for name in entries:
        if name not in expected:
            raise FormatError("unexpected tensor", name)
    for name, array in expected.items():
        if name not in entries:
            raise FormatError("missing tensor", name)
        if entries[name].shape != array.shape:
            raise FormatError(
                f"shape {entries[name].shape} does not match expected {array.shape}", name
            )
    model.load_state_dict(OrderedDict((name, entries[name]) for name in expected))
    logger.info("loaded model from %s", path)
    return model

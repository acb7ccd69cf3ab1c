"""Binary feature file format ("EMOF").

Layout, all little-endian:

    magic   4 bytes  b"EMOF"
    version u32      currently 1
    T       u32      frame count
    D       u32      feature dimension
    shift   f32      frame shift in milliseconds
    data    T*D f32  row-major feature values
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .features import FeatureMatrix, StreamTag

MAGIC = b"EMOF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIf")


def write_features(path: str | Path, feats: FeatureMatrix) -> None:
    t_count, dim = feats.values.shape
    header = _HEADER.pack(MAGIC, VERSION, t_count, dim, feats.frame_shift_ms)
    data = feats.values.astype("<f4").tobytes()
    Path(path).write_bytes(header + data)


def read_features(path: str | Path, stream_tag: StreamTag = StreamTag.COMBINED) -> FeatureMatrix:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, t_count, dim, shift = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * t_count * dim
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(t_count, dim)
    return FeatureMatrix(values.astype(np.float64), float(shift), stream_tag)

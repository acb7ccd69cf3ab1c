"""Named-tensor checkpoint container ("EMOW").

Layout, all little-endian:

    magic    4 bytes  b"EMOW"
    version  u32      currently 1
    count    u32      number of tensors
    per tensor:
        name_len u32, name utf-8 bytes,
        ndim u32, dims u32 * ndim,
        data f32 row-major
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .autograd import Tensor
from .errors import FormatError

MAGIC = b"EMOW"
VERSION = 1


def _tensor_data(value) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def save_checkpoint(path: str | Path, params: Mapping[str, "Tensor | np.ndarray"]) -> None:
    chunks = [struct.pack("<4sII", MAGIC, VERSION, len(params))]
    for name in sorted(params):
        data = _tensor_data(params[name]).astype("<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    magic, version, count = struct.unpack_from("<4sII", blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
        except (struct.error, ValueError) as exc:
            raise FormatError(f"{path}: truncated tensor record ({exc})") from None
        out[name] = data.reshape(shape).astype(np.float64)
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return out

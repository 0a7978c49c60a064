"""OSDGCKPT binary tensor files.

Layout (little-endian): magic ``OSDGCKPT``, version u32, tensor count u32,
then per tensor [name_len u32][utf8 name][rank u32][dims u32 ...][f64 payload].
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"OSDGCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f8", order="C")  # ascontiguousarray would promote 0-d to 1-d
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an OSDGCKPT file")
    version, count = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * size > len(raw):
                raise CheckpointError(f"{path}: tensor {name!r} truncated")
            out[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(dims).copy()
            pos += 8 * size
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header ({exc})") from None
    return out

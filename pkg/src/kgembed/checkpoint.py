"""Binary checkpoint files.

Layout: magic "KGE1", u32 LE format version, then per parameter: u32 LE
name length, name bytes (UTF-8), u32 LE rank (always 2), u32 LE rows, u32
LE cols, then rows*cols float64 LE values row-major.  Optimizer state is
not persisted.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"KGE1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, value in state.items():
            value = np.ascontiguousarray(value, dtype=np.float64)
            if value.ndim != 2:
                raise CheckpointError(f"parameter {name!r} is not rank 2")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<III", 2, value.shape[0], value.shape[1]))
            fh.write(value.astype("<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 8
    state: dict[str, np.ndarray] = {}
    while offset < len(data):
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        rank, rows, cols = struct.unpack_from("<III", data, offset)
        offset += 12
        if rank != 2:
            raise CheckpointError(f"{path}: parameter {name!r} has rank {rank}")
        count = rows * cols
        value = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        state[name] = value.reshape(rows, cols).astype(np.float64)
    return state

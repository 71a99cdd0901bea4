"""Weight checkpoint file format.

Layout (all integers little-endian):

  magic "TPLN"
  u16   format version (currently 1)
  u32   entry count
  per entry:
    u16   name length, then that many utf-8 bytes
    u32   rank
    u32[rank] extents
    f32[prod(extents)] raw little-endian values

Round-trips are bit-exact for float32 state.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"TPLN"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for malformed checkpoint files."""


def save_checkpoint(path, states: dict[str, np.ndarray]) -> None:
    """Write named float32 arrays to `path` in insertion order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(states)))
        for name, arr in states.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into an ordered name -> float32 array dict."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (count,) = struct.unpack_from("<I", blob, 6)
    pos = 10
    states: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(shape)
        pos += 4 * n
        states[name] = arr.copy()
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return states

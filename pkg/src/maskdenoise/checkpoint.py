"""Binary container for named float32 tensors.

Layout (all integers little-endian):

    magic "MDNC" | format version u32 | tensor count u32
    per tensor: name length u16 | UTF-8 name | dtype tag u8 (0 = float32)
                | ndim u8 | dims u32 each | raw little-endian float32 data

Round-trips are bit-exact, which is what makes "same seed, same bytes"
training reproducibility checkable at the file level. The same container
carries model weights, optimizer state, and per-layer feature dumps.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MDNC"
FORMAT_VERSION = 1

_DTYPE_F32 = 0


class CheckpointError(ValueError):
    """Malformed or truncated container bytes."""


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    """Serialize named arrays. Values are stored as float32."""
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")  # tobytes() below emits C order
        if arr.ndim > 255:
            raise CheckpointError(f"tensor {name!r} has too many dims")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]!r}...")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", _DTYPE_F32, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    """Parse container bytes back into named float32 arrays."""
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointError("not a tensor container (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported container version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}

    def need(n: int):
        if pos + n > len(blob):
            raise CheckpointError("truncated container")

    for _ in range(count):
        need(2)
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        need(name_len)
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        need(2)
        dtype_tag, ndim = struct.unpack_from("<BB", blob, pos)
        pos += 2
        if dtype_tag != _DTYPE_F32:
            raise CheckpointError(f"unknown dtype tag {dtype_tag} for tensor {name!r}")
        need(4 * ndim)
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        n_bytes = 4 * int(np.prod(shape, dtype=np.int64)) if ndim else 4
        need(n_bytes)
        arr = np.frombuffer(blob[pos : pos + n_bytes], dtype="<f4").reshape(shape)
        pos += n_bytes
        if name in out:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        out[name] = arr.copy()  # own the memory; the blob may be a mmap
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last tensor")
    return out


def save(path: str | Path, tensors: dict[str, np.ndarray]):
    Path(path).write_bytes(dumps(tensors))


def load(path: str | Path) -> dict[str, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return loads(p.read_bytes())

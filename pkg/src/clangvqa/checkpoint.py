"""Versioned binary checkpoints.

Layout (little-endian throughout)::

    magic "CLGC" | version u32 | config length u32 | tensor count u32
    config JSON (utf-8, sorted keys)
    per tensor: name length u32 | name utf-8 | ndim u32 | dims u32 * ndim | f32 data

Tensors are written in sorted-name order, so saving the same state twice
yields the same bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"CLGC"
VERSION = 1
_HEAD = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")
F32 = np.dtype("<f4")


def encode_checkpoint(config: dict, tensors: dict[str, np.ndarray]) -> bytes:
    meta = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    parts = [_HEAD.pack(MAGIC, VERSION, len(meta), len(tensors)), meta]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=F32, order="C")
        raw = name.encode()
        parts.append(_U32.pack(len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(blob) < _HEAD.size:
        raise CheckpointError("checkpoint shorter than its header")
    magic, version, meta_len, count = _HEAD.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = _HEAD.size
    try:
        config = json.loads(blob[pos:pos + meta_len])
        pos += meta_len
        tensors = {}
        for _ in range(count):
            (n,) = _U32.unpack_from(blob, pos)
            name = blob[pos + 4:pos + 4 + n].decode()
            pos += 4 + n
            (ndim,) = _U32.unpack_from(blob, pos)
            shape = struct.unpack_from(f"<{ndim}I", blob, pos + 4)
            pos += 4 + 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * size > len(blob):
                raise CheckpointError(f"tensor {name!r} runs past the end of the file")
            tensors[name] = np.frombuffer(blob, F32, size, pos).reshape(shape).astype(np.float32)
            pos += 4 * size
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after the tensor table")
    return config, tensors


def save_checkpoint(path: str | Path, config: dict, tensors: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(config, tensors))
    return path


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    return decode_checkpoint(Path(path).read_bytes())

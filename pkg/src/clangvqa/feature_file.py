"""Feature-file pair: a JSON-lines manifest plus a little-endian float32 blob.

Blob layout: a 16-byte header (magic ``CLGF``, format version, record count,
reserved; all u32 little-endian) followed by each sample's feature matrix,
row-major, back to back.  Manifest line 1 is the dataset record; every other
line is a sample record carrying ``offset``/``nbytes``/``shape`` of its blob
region.  The header's record count equals the number of manifest lines.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptionError, FormatError

MAGIC = b"CLGF"
VERSION = 1
HEADER = struct.Struct("<4sIII")
F32 = np.dtype("<f4")


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_feature_file(stem: str | Path, header: dict, records: Sequence[dict],
                       arrays: Sequence[np.ndarray]) -> Path:
    """Write ``<stem>.jsonl`` and ``<stem>.clgf``; returns the stem."""
    stem = Path(stem)
    lines = [_dumps(header)]
    offset = HEADER.size
    chunks = []
    for record, arr in zip(records, arrays, strict=True):
        data = np.ascontiguousarray(arr, dtype=F32)
        chunk = data.tobytes()
        record = dict(record, offset=offset, nbytes=len(chunk), shape=list(data.shape))
        lines.append(_dumps(record))
        chunks.append(chunk)
        offset += len(chunk)
    with open(stem.with_suffix(".clgf"), "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, len(lines), 0))
        for chunk in chunks:
            fh.write(chunk)
    stem.with_suffix(".jsonl").write_text("\n".join(lines) + "\n")
    return stem


def _read_header(blob: bytes) -> int:
    if len(blob) < HEADER.size:
        raise CorruptionError("blob shorter than its header", offset=len(blob))
    magic, version, count, _ = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported feature-file version {version}")
    return count


def read_feature_file(stem: str | Path, header_only: bool = False):
    """Return ``(dataset_record, [(sample_record, array), ...])``."""
    stem = Path(stem)
    blob = stem.with_suffix(".clgf").read_bytes()
    count = _read_header(blob)
    lines = stem.with_suffix(".jsonl").read_text().splitlines()
    if len(lines) != count:
        raise CorruptionError(f"manifest has {len(lines)} records, header says {count}")
    header = json.loads(lines[0])
    if header_only:
        return header, []
    out = []
    expected = HEADER.size
    for line in lines[1:]:
        record = json.loads(line)
        offset, nbytes = record["offset"], record["nbytes"]
        if offset != expected:
            raise CorruptionError("manifest offsets leave a gap or overlap", offset=offset)
        if offset + nbytes > len(blob):
            raise CorruptionError("blob truncated", offset=len(blob))
        arr = np.frombuffer(blob, dtype=F32, count=nbytes // 4, offset=offset)
        out.append((record, arr.reshape(record["shape"]).astype(np.float32)))
        expected = offset + nbytes
    if expected != len(blob):
        raise CorruptionError("trailing bytes after the last record", offset=expected)
    return header, out

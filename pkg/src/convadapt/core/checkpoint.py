"""Binary checkpoint format.

Layout (little-endian)::

    b"PETK"  version:u32
    repeated until EOF:
        name_len:u32  name:utf-8  rank:u32  extents:u32*rank  trainable:u8  payload:f32*prod(extents)
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np

from ..errors import CheckpointError, ParseError

MAGIC = b"PETK"
VERSION = 1


@dataclass
class CheckpointRecord:
    name: str
    data: np.ndarray
    trainable: bool


def encode(records: Iterable[CheckpointRecord]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for rec in records:
        name = rec.name.encode("utf-8")
        arr = np.asarray(rec.data, dtype="<f4", order="C")  # ascontiguousarray would promote rank 0
        buf.write(struct.pack("<I", len(name)))
        buf.write(name)
        buf.write(struct.pack("<I", arr.ndim))
        if arr.ndim:
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(struct.pack("<B", 1 if rec.trainable else 0))
        buf.write(arr.tobytes())
    return buf.getvalue()


def decode(blob: bytes) -> Dict[str, CheckpointRecord]:
    if blob[:4] != MAGIC:
        raise ParseError("bad checkpoint magic", 0)
    if len(blob) < 8:
        raise ParseError("truncated checkpoint header", len(blob))
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", 4)
    off = 8
    out: Dict[str, CheckpointRecord] = {}

    def take(n: int) -> int:
        nonlocal off
        if off + n > len(blob):
            raise ParseError("truncated checkpoint record", off)
        start = off
        off += n
        return start

    while off < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, take(4))
        start = take(nlen)
        try:
            name = blob[start : start + nlen].decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("record name is not valid UTF-8", start) from None
        (rank,) = struct.unpack_from("<I", blob, take(4))
        shape = struct.unpack_from(f"<{rank}I", blob, take(4 * rank)) if rank else ()
        (flag,) = struct.unpack_from("<B", blob, take(1))
        count = int(np.prod(shape)) if rank else 1
        start = take(4 * count)
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=start).astype(np.float32).reshape(shape)
        if name in out:
            raise ParseError(f"duplicate record {name!r}", start)
        out[name] = CheckpointRecord(name, data, bool(flag))
    return out


def save(path: os.PathLike, records: Iterable[CheckpointRecord]) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(records))


def load(path: os.PathLike) -> Dict[str, CheckpointRecord]:
    with open(path, "rb") as fh:
        return decode(fh.read())


def checksum(records: Dict[str, CheckpointRecord], prefix_exclude: Optional[Iterable[str]] = None) -> str:
    """SHA-256 over names and payload bytes, skipping names with an excluded prefix."""
    skip = tuple(prefix_exclude or ())
    h = hashlib.sha256()
    for name in sorted(records):
        if skip and name.startswith(skip):
            continue
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(records[name].data, dtype="<f4").tobytes())
    return h.hexdigest()


def require_compatible(a: Dict[str, CheckpointRecord], b: Dict[str, CheckpointRecord]) -> None:
    if set(a) != set(b):
        missing = sorted(set(a) ^ set(b))
        raise CheckpointError(f"checkpoints do not share layer names; differing: {missing[:5]}")
    for name in a:
        if a[name].data.shape != b[name].data.shape:
            raise CheckpointError(f"layer {name!r} has shape {a[name].data.shape} vs {b[name].data.shape}")

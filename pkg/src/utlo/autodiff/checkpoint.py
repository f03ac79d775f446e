"""Binary container for named float32 arrays.

Layout (little-endian)::

    b"UTLO"  u32 version
    repeated until EOF:
        u32 name_len, name (UTF-8), u32 rank, rank x u32 dims, f32 data

Non-float payloads (counters, RNG words, JSON metadata) are stored as raw
32-bit words reinterpreted as f32 so they round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"UTLO"
VERSION = 1


class CheckpointFormatError(ValueError):
    """The file is not a readable checkpoint container."""


def encode_records(records: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in records.items():
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            raise TypeError(f"record {name!r} must be float32, got {arr.dtype}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_records(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise CheckpointFormatError("bad magic bytes: not a UTLO checkpoint")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} (expected {VERSION})")
    out: dict[str, np.ndarray] = {}
    pos = 8
    try:
        while pos < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode("utf-8")
            if len(name.encode("utf-8")) != name_len:
                raise CheckpointFormatError("truncated record name")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            nbytes = 4 * count
            if pos + nbytes > len(blob):
                raise CheckpointFormatError(f"truncated data for record {name!r}")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims)
            out[name] = arr.astype(np.float32)
            pos += nbytes
    except struct.error as exc:
        raise CheckpointFormatError(f"truncated checkpoint: {exc}") from exc
    return out


def write_records(path, records: dict[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_records(records))
    tmp.replace(path)


def read_records(path) -> dict[str, np.ndarray]:
    return decode_records(Path(path).read_bytes())


def words_to_f32(words) -> np.ndarray:
    """Pack unsigned 32-bit words into an f32 array, bit for bit."""
    return np.asarray(words, dtype=np.uint32).view(np.float32)


def f32_to_words(arr) -> np.ndarray:
    return np.asarray(arr, dtype=np.float32).view(np.uint32)


def bytes_to_f32(raw: bytes) -> np.ndarray:
    """Length-prefixed byte string as f32 words (first word = byte length)."""
    padded = raw + b"\0" * (-len(raw) % 4)
    words = np.concatenate([[len(raw)], np.frombuffer(padded, dtype="<u4")]).astype(np.uint32)
    return words_to_f32(words)


def f32_to_bytes(arr) -> bytes:
    words = f32_to_words(arr)
    n = int(words[0])
    return words[1:].astype("<u4").tobytes()[:n]

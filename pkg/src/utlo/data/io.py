"""LTDS dataset files.

Layout (little-endian): b"LTDS", u32 version, u32 C, u32 H, u64 N,
C x u32 class counts, N x u16 labels, N x 3 x H x H u8 images.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .profile import LongTailProfile, few_shot_by_fraction
from .world import Dataset

MAGIC = b"LTDS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


class DatasetFormatError(ValueError):
    pass


def encode_dataset(ds: Dataset) -> bytes:
    c, h, n = ds.num_classes, ds.image_size, len(ds)
    parts = [
        _HEADER.pack(MAGIC, VERSION, c, h, n),
        np.asarray(ds.profile.class_counts, dtype="<u4").tobytes(),
        ds.labels.astype("<u2").tobytes(),
        np.ascontiguousarray(ds.images, dtype=np.uint8).tobytes(),
    ]
    return b"".join(parts)


def decode_dataset(blob: bytes, few_shot_classes=None, rho=None, seed: int = 0) -> Dataset:
    if len(blob) < _HEADER.size:
        raise DatasetFormatError("truncated LTDS header")
    magic, version, c, h, n = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DatasetFormatError("bad magic bytes: not an LTDS file")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported LTDS version {version}")
    expected = _HEADER.size + 4 * c + 2 * n + n * 3 * h * h
    if len(blob) != expected:
        raise DatasetFormatError(f"LTDS size {len(blob)} != expected {expected}")
    pos = _HEADER.size
    counts = np.frombuffer(blob, dtype="<u4", count=c, offset=pos).astype(int)
    pos += 4 * c
    labels = np.frombuffer(blob, dtype="<u2", count=n, offset=pos).astype(np.int64)
    pos += 2 * n
    images = np.frombuffer(blob, dtype=np.uint8, count=n * 3 * h * h, offset=pos)
    images = images.reshape(n, 3, h, h).copy()
    if few_shot_classes is None:
        few_shot_classes = few_shot_by_fraction(c, 0.4)
    if rho is None:
        rho = counts[0] / counts[-1]
    profile = LongTailProfile(tuple(counts.tolist()), float(rho), frozenset(few_shot_classes))
    return Dataset(images, labels, profile, seed)


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_dataset(ds))
    tmp.replace(path)


def load_dataset(path, few_shot_classes=None, rho=None, seed: int = 0) -> Dataset:
    return decode_dataset(Path(path).read_bytes(), few_shot_classes, rho, seed)

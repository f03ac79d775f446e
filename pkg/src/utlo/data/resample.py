"""Bilinear image reduction (half-pixel centres, no antialiasing)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..autodiff.tensor import ConfigurationError


@lru_cache(maxsize=None)
def bilinear_matrix(size_in: int, size_out: int) -> np.ndarray:
    """(size_out, size_in) interpolation weights along one axis.

    Output pixel i samples the source at (i + 0.5) * size_in / size_out - 0.5,
    clamped to the valid range.
    """
    scale = size_in / size_out
    m = np.zeros((size_out, size_in), dtype=np.float64)
    for i in range(size_out):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        lo = min(int(np.floor(src)), size_in - 1)
        hi = min(lo + 1, size_in - 1)
        frac = src - lo
        m[i, lo] += 1 - frac
        m[i, hi] += frac
    m.setflags(write=False)
    return m


def downsample_bilinear(images, target: int) -> np.ndarray:
    """Resize (N, C, H, H) images to (N, C, target, target)."""
    images = np.asarray(images)
    h = images.shape[-1]
    if images.shape[-2] != h:
        raise ConfigurationError(f"expected square images, got {images.shape}")
    if target >= h or target < 1 or h % target:
        raise ConfigurationError(f"target {target} must be a proper divisor of {h}")
    m = bilinear_matrix(h, target)
    dtype = images.dtype if np.issubdtype(images.dtype, np.floating) else np.float32
    out = np.einsum("ij,ncjk,lk->ncil", m, images.astype(np.float64), m, optimize=True)
    return out.astype(dtype)

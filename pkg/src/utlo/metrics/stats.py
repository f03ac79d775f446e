"""Gaussian fits, Frechet distance and the unbiased polynomial-kernel MMD."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gaussian_fit(features) -> GaussianStats:
    """Sample mean and unbiased (N - 1) covariance, accumulated in float64."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise MetricError(f"features must be (N, dim), got shape {f.shape}")
    n = f.shape[0]
    if n < 2:
        raise MetricError(f"need at least 2 samples for a covariance, got {n}")
    mean = f.mean(axis=0)
    centered = f - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianStats(mean, cov, n)


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Square root of a symmetric PSD matrix; negative eigenvalues clamp to 0."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def trace_sqrt_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """Tr((cov_a cov_b)^{1/2}) through the symmetric form A^{1/2} B A^{1/2}."""
    root_a = sqrtm_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    if a.dim != b.dim:
        raise MetricError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    value = float(diff @ diff) + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * trace_sqrt_product(a.cov, b.cov)
    return max(value, 0.0)


def polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def _mmd_block(x: np.ndarray, y: np.ndarray) -> float:
    m, n = x.shape[0], y.shape[0]
    kxx = polynomial_kernel(x, x)
    kyy = polynomial_kernel(y, y)
    kxy = polynomial_kernel(x, y)
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


def kid_mmd(f_a, f_b, block: int = 1000) -> float:
    """Unbiased MMD^2 with the cubic polynomial kernel, averaged over disjoint blocks.

    Block ``k`` pairs rows ``[k*block, (k+1)*block)`` of both sets, so the
    result is a deterministic function of the row order.
    """
    a = np.asarray(f_a, dtype=np.float64)
    b = np.asarray(f_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise MetricError(f"feature shapes do not match: {a.shape} vs {b.shape}")
    if min(len(a), len(b)) < 2:
        raise MetricError("kid_mmd needs at least 2 samples per set")
    limit = min(len(a), len(b))
    if block > limit:
        warnings.warn(f"KID block {block} exceeds sample count; clipped to {limit}", stacklevel=2)
        block = limit
    if block < 2:
        raise MetricError("KID block size must be >= 2")
    num_blocks = limit // block
    values = [
        _mmd_block(a[k * block : (k + 1) * block], b[k * block : (k + 1) * block]) for k in range(num_blocks)
    ]
    return float(np.mean(values))

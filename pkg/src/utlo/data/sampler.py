"""Class-damped weighted sampling.

Each sample of class c is drawn with weight w_c = n_c^-beta, so the
per-class draw probability is proportional to n_c^(1 - beta) and the
effective imbalance ratio becomes rho^(1 - beta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .profile import LongTailProfile
from .world import Dataset


@dataclass(frozen=True)
class SamplerWeights:
    beta: float
    per_class_weight: tuple
    effective_rho: float
    class_counts: tuple

    @property
    def class_probabilities(self) -> np.ndarray:
        mass = np.asarray(self.class_counts, dtype=np.float64) * np.asarray(self.per_class_weight)
        return mass / mass.sum()


def sampler_weights(profile: LongTailProfile, beta: float) -> SamplerWeights:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    counts = np.asarray(profile.class_counts, dtype=np.float64)
    weights = counts ** (-beta)
    eff = profile.realized_rho ** (1.0 - beta)
    return SamplerWeights(float(beta), tuple(weights.tolist()), float(eff), profile.class_counts)


def sample_indices(dataset: Dataset, weights: SamplerWeights, batch: int, rng: np.random.Generator):
    """Draw ``batch`` dataset indices with replacement, P(i) proportional to w_label(i)."""
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if len(dataset) == 0:
        raise ValueError("cannot sample from an empty dataset")
    # class first, then uniform within class: same law as per-sample weights
    classes = rng.choice(dataset.num_classes, size=batch, p=weights.class_probabilities)
    idx = np.empty(batch, dtype=np.int64)
    for i, c in enumerate(classes):
        members = dataset.class_indices[c]
        idx[i] = members[rng.integers(len(members))]
    return idx


def sample_batch(dataset: Dataset, weights: SamplerWeights, batch: int, rng: np.random.Generator):
    """Images as float32 in [-1, 1] and their labels."""
    idx = sample_indices(dataset, weights, batch, rng)
    return dataset.as_float(idx), dataset.labels[idx]

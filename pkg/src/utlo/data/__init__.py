"""Long-tailed synthetic data: class profiles, the image world, sampling, resizing."""

from .io import DatasetFormatError, load_dataset, save_dataset
from .profile import (
    LongTailProfile,
    ProfileError,
    balanced_profile,
    few_shot_by_fraction,
    few_shot_by_threshold,
    make_exponential_profile,
)
from .resample import bilinear_matrix, downsample_bilinear
from .sampler import SamplerWeights, sample_batch, sample_indices, sampler_weights
from .world import Dataset, SyntheticWorldSpec, WorldError, generate_synthetic_dataset

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "LongTailProfile",
    "ProfileError",
    "SamplerWeights",
    "SyntheticWorldSpec",
    "WorldError",
    "balanced_profile",
    "bilinear_matrix",
    "downsample_bilinear",
    "few_shot_by_fraction",
    "few_shot_by_threshold",
    "generate_synthetic_dataset",
    "load_dataset",
    "make_exponential_profile",
    "sample_batch",
    "sample_indices",
    "sampler_weights",
    "save_dataset",
]

"""Distribution distances over embedded image features."""

from .embedders import (
    EMBEDDERS,
    FeatureEmbedder,
    PoolFlattenEmbedder,
    ProbeClassifierEmbedder,
    RandomConvEmbedder,
    get_embedder,
)
from .report import (
    CSV_COLUMNS,
    LabeledImages,
    MetricsReport,
    PairSimilarityReport,
    append_csv,
    balanced_real_indices,
    class_pair_similarity,
    compute_report,
    generate_images,
    generate_low_images,
    read_csv,
    sample_generated,
    sample_generated_balanced,
    write_json,
)
from .stats import GaussianStats, MetricError, frechet_distance, gaussian_fit, kid_mmd, sqrtm_psd

__all__ = [
    "CSV_COLUMNS",
    "EMBEDDERS",
    "FeatureEmbedder",
    "GaussianStats",
    "LabeledImages",
    "MetricError",
    "MetricsReport",
    "PairSimilarityReport",
    "PoolFlattenEmbedder",
    "ProbeClassifierEmbedder",
    "RandomConvEmbedder",
    "append_csv",
    "balanced_real_indices",
    "class_pair_similarity",
    "compute_report",
    "frechet_distance",
    "gaussian_fit",
    "generate_images",
    "generate_low_images",
    "get_embedder",
    "kid_mmd",
    "read_csv",
    "sample_generated",
    "sample_generated_balanced",
    "sqrtm_psd",
    "write_json",
]

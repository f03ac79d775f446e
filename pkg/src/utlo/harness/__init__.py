"""Experiment driver: configuration, run directories, sweeps and reports."""

from .config import ExperimentConfig, load_config, save_config
from .run import (
    SWEEP_AXES,
    HarnessError,
    RunManifest,
    build_dataset,
    derive_seed,
    emit_report,
    evaluate_model,
    knowledge_sharing_grid,
    low_resolution_column,
    reference_set,
    run_sweep,
    select_best,
    sweep_configs,
    train_run,
    write_sample_grid,
)

__all__ = [
    "SWEEP_AXES",
    "ExperimentConfig",
    "HarnessError",
    "RunManifest",
    "build_dataset",
    "derive_seed",
    "emit_report",
    "evaluate_model",
    "knowledge_sharing_grid",
    "load_config",
    "low_resolution_column",
    "reference_set",
    "run_sweep",
    "save_config",
    "select_best",
    "sweep_configs",
    "train_run",
    "write_sample_grid",
]

"""Dual-branch vision transformer with selective cross-attention fusion."""

from ._core import (
    CheckpointError,
    ConfigError,
    DatasetError,
    Model,
    ScavitError,
    ShapeError,
    TrainingDiverged,
    auc,
    cli,
    confusion,
    drop_probability,
    f1_from,
    generate_synthetic,
    load_checkpoint,
    percent_2dp,
    report,
    roc_curve,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "Model",
    "ScavitError",
    "ShapeError",
    "TrainingDiverged",
    "auc",
    "cli",
    "confusion",
    "drop_probability",
    "f1_from",
    "generate_synthetic",
    "load_checkpoint",
    "percent_2dp",
    "report",
    "roc_curve",
]

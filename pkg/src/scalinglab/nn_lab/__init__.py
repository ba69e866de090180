"""Desk-scale neural-network experiments: data, MLP, SGD."""

from .data import (
    Dataset,
    corrupt_labels,
    generate_synthetic,
    load_idx,
    one_hot,
    subsample,
    synthetic_split,
    write_idx,
)
from .mlp import (
    MlpModel,
    TrainConfig,
    TrainingTrace,
    build_mlp,
    evaluate_mse,
    from_widths,
    sgd_step,
    train_sgd,
)

__all__ = [
    "Dataset",
    "MlpModel",
    "TrainConfig",
    "TrainingTrace",
    "build_mlp",
    "corrupt_labels",
    "evaluate_mse",
    "from_widths",
    "generate_synthetic",
    "load_idx",
    "one_hot",
    "sgd_step",
    "subsample",
    "synthetic_split",
    "train_sgd",
    "write_idx",
]

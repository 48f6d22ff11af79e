"""Class-imbalanced classification with learned semi-supervised data selection."""

from .data import (
    CarvedSplit,
    ImbalanceSpec,
    LabeledDataset,
    UnlabeledPool,
    carve_imbalance,
    generate_gaussian_blobs,
    oversample_to_balance,
)
from .nn import MlpModel, SgdConfig, init_mlp
from .selectnet import SelectNetConfig, SelectNetStrategy, run_selectnet
from .strategies import SelectionDecision, StrategyConfig, run_rounds

__version__ = "0.1.0"

__all__ = [
    "CarvedSplit",
    "ImbalanceSpec",
    "LabeledDataset",
    "MlpModel",
    "SelectNetConfig",
    "SelectNetStrategy",
    "SelectionDecision",
    "SgdConfig",
    "StrategyConfig",
    "UnlabeledPool",
    "carve_imbalance",
    "generate_gaussian_blobs",
    "init_mlp",
    "oversample_to_balance",
    "run_rounds",
    "run_selectnet",
]

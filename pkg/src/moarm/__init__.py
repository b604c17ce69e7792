"""Missingness-aware order-agnostic autoregressive modeling for tabular data.

Train on incomplete tables under MCAR or MNAR missingness, impute with
Monte-Carlo (optionally importance-reweighted) conditional sampling, and
drive sequential feature acquisition from mutual-information estimates.
"""

__version__ = "0.1.0"

from .checkpoint import ModelBundle, load_checkpoint, save_checkpoint
from .data import EncodedDataset, FeatureSchema, FeatureSpec, Standardization
from .masks import MaskSuite, ObservationMask
from .model import LossBreakdown, TrainConfig, fit
from .sampling import ImputationResult, UnmaskingSchedule, impute, impute_batch, make_schedule

__all__ = [
    "EncodedDataset",
    "FeatureSchema",
    "FeatureSpec",
    "ImputationResult",
    "LossBreakdown",
    "MaskSuite",
    "ModelBundle",
    "ObservationMask",
    "Standardization",
    "TrainConfig",
    "UnmaskingSchedule",
    "fit",
    "impute",
    "impute_batch",
    "load_checkpoint",
    "make_schedule",
    "save_checkpoint",
]

"""PLUME: one-class anomaly detection with adaptive rank-1 feature
perturbation, a VAE noise generator, and contrastive guidance."""

from .config import TrainConfig
from .data import FeatureDataset, one_class_split, read_features, synth_blobs, write_features
from .losses import LossBreakdown
from .metrics import aggregate, roc_auc
from .perturbator import Strategy
from .training import PlumeModel, RunReport, fit, run_suite

__all__ = [
    "TrainConfig",
    "FeatureDataset",
    "one_class_split",
    "read_features",
    "write_features",
    "synth_blobs",
    "LossBreakdown",
    "roc_auc",
    "aggregate",
    "Strategy",
    "PlumeModel",
    "RunReport",
    "fit",
    "run_suite",
]

__version__ = "0.1.0"

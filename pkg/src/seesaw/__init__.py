"""Seesaw loss for long-tailed classification, with numpy-only training at desk scale."""
from .data import Dataset, SamplerKind, SyntheticSpec, epoch_indices, generate, generate_balanced
from .heads import LinearHead, detection_score, linear_backward, linear_forward, spatial_normalized_forward
from .losses import (ClassCounts, LossResult, SeesawConfig, ce_loss, compensation_factor,
                     counts_from_dataset, counts_update, mitigation_factor, seesaw_factors, seesaw_loss)
from .telemetry import TelemetryLog, grad_ratio_report
from .trainer import Decoupled, Metrics, TrainConfig, TrainingDiverged, evaluate, sweep, train

__all__ = [
    "Dataset",
    "SamplerKind",
    "SyntheticSpec",
    "epoch_indices",
    "generate",
    "generate_balanced",
    "LinearHead",
    "detection_score",
    "linear_backward",
    "linear_forward",
    "spatial_normalized_forward",
    "ClassCounts",
    "LossResult",
    "SeesawConfig",
    "ce_loss",
    "compensation_factor",
    "counts_from_dataset",
    "counts_update",
    "mitigation_factor",
    "seesaw_factors",
    "seesaw_loss",
    "TelemetryLog",
    "grad_ratio_report",
    "Decoupled",
    "Metrics",
    "TrainConfig",
    "TrainingDiverged",
    "evaluate",
    "sweep",
    "train",
]

__version__ = "0.1.0"

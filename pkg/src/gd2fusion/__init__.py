"""Prompt-guided dual-domain infrared/visible image fusion."""

from ._validation import (
    CheckpointError,
    CheckpointFormatError,
    DimensionError,
    IncompatibleCheckpointError,
    NonFiniteLossError,
    PromptLookupError,
)
from .degradations import DegradedSample, make_dataset
from .estimator import FusionEstimator
from .losses import LossConfig, LossReport, total_loss
from .metrics import MetricReport, evaluate
from .network import GD2FusionNet, NetworkConfig, load_params, pad_to_grid, save_params
from .prompts import FileProvider, PromptSpec, StubProvider, encode, render_prompt
from .trainer import TrainConfig, train
from .wavelet import SubBands, dwt2, iwt2

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "CheckpointFormatError",
    "DegradedSample",
    "DimensionError",
    "FileProvider",
    "FusionEstimator",
    "GD2FusionNet",
    "IncompatibleCheckpointError",
    "LossConfig",
    "LossReport",
    "MetricReport",
    "NetworkConfig",
    "NonFiniteLossError",
    "PromptLookupError",
    "PromptSpec",
    "StubProvider",
    "SubBands",
    "TrainConfig",
    "dwt2",
    "encode",
    "evaluate",
    "iwt2",
    "load_params",
    "make_dataset",
    "pad_to_grid",
    "render_prompt",
    "save_params",
    "total_loss",
    "train",
]

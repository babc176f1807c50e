"""Visuo-tactile slip detection with multi-scale temporal convolution networks."""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    TrainingAbort,
    UsageError,
    ValidationError,
    VtslipError,
)
from .model import SlipModel, SlipModelConfig, load_checkpoint, parameter_manifest, save_checkpoint
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DimensionError", "TrainingAbort", "UsageError", "ValidationError", "VtslipError",
    "SlipModel", "SlipModelConfig", "load_checkpoint", "parameter_manifest", "save_checkpoint",
    "Tensor", "no_grad",
]

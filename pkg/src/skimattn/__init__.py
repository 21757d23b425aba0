"""Layout-only skim attention for document understanding, on a small numpy autodiff core."""

from .errors import (
    AllMaskedRowError,
    CheckpointError,
    DimensionError,
    NonFiniteError,
    SkimError,
    UndefinedLossError,
    ValidationError,
)
from .models import LABELS, Model, ModelConfig, parameter_count

__version__ = "0.1.0"

__all__ = [
    "AllMaskedRowError",
    "CheckpointError",
    "DimensionError",
    "LABELS",
    "Model",
    "ModelConfig",
    "NonFiniteError",
    "SkimError",
    "UndefinedLossError",
    "ValidationError",
    "parameter_count",
]

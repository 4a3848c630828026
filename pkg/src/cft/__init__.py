"""Category-wise fine-tuning of multi-label classification heads."""

from cft.errors import (
    CFTError,
    ConfigurationError,
    CorruptionError,
    FormatError,
    ParameterError,
    UndefinedMetricError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "CFTError",
    "ConfigurationError",
    "CorruptionError",
    "FormatError",
    "ParameterError",
    "UndefinedMetricError",
    "ValidationError",
]

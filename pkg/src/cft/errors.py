"""Exception hierarchy shared by every module."""


class CFTError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(CFTError, ValueError):
    """An argument is out of range or has the wrong shape."""


class ConfigurationError(CFTError, ValueError):
    """A policy or preset is inconsistent with the data it is applied to."""


class UndefinedMetricError(CFTError, ValueError):
    """AUC/AP cannot be computed (no positives or no negatives)."""


class FormatError(CFTError):
    """A file does not carry the expected magic or version."""


class CorruptionError(CFTError):
    """A file's declared size does not match its actual size."""


class ValidationError(CFTError):
    """A file parsed correctly but holds invalid values (e.g. NaN)."""

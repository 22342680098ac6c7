"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "KdeSearchError",
    "DegenerateDataError",
    "ExpansionOverflowError",
    "OutsideSupportError",
    "ConditioningError",
    "DataFormatError",
    "ConfigError",
]


class KdeSearchError(Exception):
    """Base class for all package-specific errors."""


class DegenerateDataError(KdeSearchError):
    """Raised when sample data carries no usable spread (e.g. zero variance)."""


class ExpansionOverflowError(KdeSearchError):
    """Raised when expansion coefficients become non-finite."""


class OutsideSupportError(KdeSearchError):
    """Raised when a conditioned density has zero mass everywhere."""


class ConditioningError(KdeSearchError):
    """Raised when a Gaussian conditional cannot be formed (singular block)."""


class DataFormatError(KdeSearchError):
    """Raised on malformed annotation files; message carries the line number."""


class ConfigError(KdeSearchError):
    """Raised on malformed configuration files or CLI arguments."""

from __future__ import annotations


class WifiDistanceError(RuntimeError):
    """Base exception for the wifi_distance package."""


class ConfigError(WifiDistanceError):
    """Raised for invalid run configuration or command usage."""


class DataError(WifiDistanceError):
    """Raised when input data or an artifact file cannot be used."""


class InvariantError(WifiDistanceError):
    """Raised when an internal contract is violated."""


class LearnerInputError(DataError, ValueError):
    """The rows handed to a learner, search or selector cannot be fitted."""

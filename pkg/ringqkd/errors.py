"""Exception hierarchy shared by the simulator and its command-line surface."""

from __future__ import annotations


class RingQkdError(RuntimeError):
    """Base class for every error raised deliberately by this package."""


class InputError(RingQkdError, ValueError):
    """Raised when an array input violates its documented invariants."""


class RingFitError(RingQkdError):
    """Raised when no physical all-pass ring matches the requested figures."""


class FitFailureError(RingQkdError):
    """Raised when a measured spectrum cannot be fitted."""

    def __init__(self, message: str, residual_rms_db: float | None = None) -> None:
        super().__init__(message)
        self.residual_rms_db = residual_rms_db


class ConfigError(RingQkdError):
    """Base class for configuration problems; ``key_path`` names the culprit."""

    def __init__(self, message: str, key_path: str | None = None) -> None:
        super().__init__(message)
        self.key_path = key_path


class MissingFileError(ConfigError):
    """A configuration or spectrum file does not exist or cannot be read."""


class ConfigSyntaxError(ConfigError):
    """A configuration or spectrum file cannot be parsed."""


class UnknownKeyError(ConfigError):
    """Strict parsing met a key that no schema declares."""


class InvariantViolationError(ConfigError):
    """A configured value violates a model invariant."""


class OutputError(RingQkdError):
    """Writing a result file failed."""

    def __init__(self, message: str, path: str) -> None:
        super().__init__(f"{message}: {path}")
        self.path = path


__all__ = [
    "ConfigError",
    "ConfigSyntaxError",
    "FitFailureError",
    "InputError",
    "InvariantViolationError",
    "MissingFileError",
    "OutputError",
    "RingFitError",
    "RingQkdError",
    "UnknownKeyError",
]

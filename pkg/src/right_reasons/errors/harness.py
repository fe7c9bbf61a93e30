"""Custom exceptions for the experiment harness."""


class HarnessError(Exception):
    """Base class for all harness errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class ConfigError(HarnessError):
    """Error raised when an experiment configuration is invalid or references missing files."""


class CheckpointError(HarnessError):
    """Error raised when a checkpoint cannot be read or has an unsupported format version."""


class DriverError(HarnessError):
    """Error raised when an experiment driver fails while running."""

"""Custom exceptions for explanation extraction and rendering."""


class ExplainError(Exception):
    """Base class for explanation errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class ExplanationTargetError(ExplainError):
    """Error raised when an explanation target does not exist for the model."""


class CutoffError(ExplainError):
    """Error raised when a mask cutoff lies outside (0, 1]."""


class RenderError(ExplainError):
    """Error raised when an explanation cannot be rendered for the dataset kind."""

"""Custom exceptions for the find-another-explanation loop."""


class FaeError(Exception):
    """Base class for find-another-explanation errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class EmptyDatasetError(FaeError):
    """Error raised when the loop is given no training examples."""


class MaskShapeError(FaeError):
    """Error raised when two masks being compared have different shapes."""


class EnsembleSizeError(FaeError):
    """Error raised when fewer than two models are given for a disagreement score."""

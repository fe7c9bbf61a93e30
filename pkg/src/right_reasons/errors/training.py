"""Custom exceptions for loss construction and optimization."""


class TrainingError(Exception):
    """Base class for all training errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class AnnotationMatrixError(TrainingError):
    """Error raised when an annotation matrix is not binary or has the wrong shape."""


class TargetEncodingError(TrainingError):
    """Error raised when target rows are not one-hot."""


class NonFiniteGradientError(TrainingError):
    """Error raised when a parameter gradient contains NaN or infinite entries."""

    def __init__(self, layer: int, part: str):
        self.layer = layer
        self.part = part
        super().__init__(f"Non-finite gradient in layer {layer} ({part})")


class LambdaGridError(TrainingError):
    """Error raised when a lambda1 grid is empty or not strictly increasing."""

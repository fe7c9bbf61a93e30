"""Custom exceptions for the classifier model."""


class ModelError(Exception):
    """Base class for model errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class ModelArchitectureError(ModelError):
    """Error raised when the requested layer sizes are not valid."""


class ModelShapeError(ModelError):
    """Error raised when inputs do not match the model's input dimension."""

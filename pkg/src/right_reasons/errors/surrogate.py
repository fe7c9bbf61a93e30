"""Custom exceptions for local surrogate explanations."""


class SurrogateError(Exception):
    """Base class for surrogate explainer errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class PerturbationSchemeError(SurrogateError):
    """Error raised when a perturbation scheme does not fit the instance being explained."""


class LocalFitError(SurrogateError):
    """Error raised when the local linear model cannot be fit."""

"""Custom exceptions for the differentiation engine."""


class AutodiffError(Exception):
    """Base class for all errors raised while building or differentiating a graph."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class ShapeMismatchError(AutodiffError):
    """Error raised when an operation receives operands of incompatible shapes."""

    def __init__(self, op: str, shapes: list[tuple[int, ...]]):
        self.op = op
        self.shapes = shapes
        super().__init__(f"Incompatible shapes for '{op}': {', '.join(str(shape) for shape in shapes)}")


class NonScalarRootError(AutodiffError):
    """Error raised when a gradient is requested of a non-scalar node."""


class GraphMismatchError(AutodiffError):
    """Error raised when nodes from different graphs are combined."""


class GradCheckError(AutodiffError):
    """Base class for finite-difference verification errors."""


class GradCheckStepError(GradCheckError):
    """Error raised when the finite-difference step is not positive."""


class NonFiniteValueError(GradCheckError):
    """Error raised when the function under test is not finite at a perturbed point."""

    def __init__(self, component: tuple[int, int], value: float):
        self.component = component
        self.value = value
        super().__init__(f"Non-finite value {value} at perturbed component {component} (argument, flat index)")

"""Right for the right reasons - explanation-constrained training of differentiable classifiers."""

__version__ = "0.1.0"

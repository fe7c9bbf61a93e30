"""Central finite-difference verification of analytic gradients."""

from collections.abc import Callable, Sequence

import numpy as np
import numpy.typing as npt

from right_reasons.autodiff.tape import Graph, Node, Tensor, gradient
from right_reasons.errors.autodiff import GradCheckStepError, NonFiniteValueError
from right_reasons.shared.logging import BASE_LOGGER

logger = BASE_LOGGER.getChild("gradcheck")

GraphBuilder = Callable[[Graph, list[Node]], Node]

RELATIVE_ERROR_FLOOR = 1e-8


def _evaluate(function: GraphBuilder, arrays: list[Tensor]) -> float:
    graph = Graph()
    return float(function(graph, [graph.variable(array) for array in arrays]).value)


def check_grad(function: GraphBuilder, point: Sequence[npt.ArrayLike], step: float = 1e-5) -> float:
    """
    Compares the analytic gradient of `function` against central differences.

    Args:
        function: Builds a scalar-rooted graph from one variable node per entry of `point`.
        point: The arguments at which to compare.
        step: The finite-difference step.

    Returns:
        The largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over every component.

    Raises:
        GradCheckStepError: If `step` is not positive.
        NonFiniteValueError: If the function is not finite at a perturbed point.
    """
    if not step > 0:
        msg = f"Finite-difference step must be positive, got {step}"
        raise GradCheckStepError(msg)

    arrays = [np.array(value, dtype=np.float64) for value in point]
    graph = Graph()
    variables = [graph.variable(array) for array in arrays]
    analytic = gradient(function(graph, variables), variables)

    worst = 0.0
    for argument, array in enumerate(arrays):
        flat_analytic = analytic[argument].reshape(-1)
        for index in range(array.size):
            values = []
            for direction in (step, -step):
                perturbed = [a.copy() for a in arrays]
                perturbed[argument].reshape(-1)[index] += direction
                value = _evaluate(function, perturbed)
                if not np.isfinite(value):
                    raise NonFiniteValueError((argument, index), value)
                values.append(value)
            numeric = (values[0] - values[1]) / (2 * step)
            exact = flat_analytic[index]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), RELATIVE_ERROR_FLOOR)
            worst = max(worst, error)

    logger.debug(f"Gradient check over {sum(a.size for a in arrays)} components: max relative error {worst:.3e}")
    return worst

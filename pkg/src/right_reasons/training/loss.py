"""
The right-reasons loss.

    total = sum_n sum_k -y_nk log p_nk                                  (right answers)
          + lambda1 sum_n sum_d (A_nd d/dx_nd sum_k log p_nk)^2           (right reasons)
          + lambda2 sum_i theta_i^2                                       (regular)

Both sums over examples are sums, not means, so lambda1 and lambda2 scale with the
batch the same way the cross-entropy does.
"""

from typing import NamedTuple, Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field, model_validator

from right_reasons.autodiff.tape import Graph, Node, gradient, grad_nodes, multiply, reduce_sum, scale, square
from right_reasons.errors.training import AnnotationMatrixError, TargetEncodingError
from right_reasons.model.mlp import Params, build_forward

TERM_TOLERANCE = 1e-9


class LossBreakdown(BaseModel):
    """The three loss terms and their sum."""

    right_answers: float = Field(..., ge=0, description="Cross-entropy against one-hot targets.")
    right_reasons: float = Field(..., ge=0, description="lambda1-weighted squared input gradients inside A.")
    regular: float = Field(..., ge=0, description="lambda2-weighted squared parameter norm.")
    total: float = Field(..., description="Sum of the three terms.")
    raw_right_reasons: float = Field(..., ge=0, description="The right-reasons term before weighting by lambda1.")

    @model_validator(mode="after")
    def check_total(self) -> Self:
        parts = self.right_answers + self.right_reasons + self.regular
        if abs(self.total - parts) > TERM_TOLERANCE * max(1.0, abs(parts)):
            msg = f"Loss total {self.total} does not match its terms ({parts})"
            raise ValueError(msg)
        return self

    @property
    def reasons_to_answers(self) -> float:
        """right_reasons / right_answers, the quantity balanced when choosing lambda1."""
        if self.right_answers == 0:
            return float("inf") if self.right_reasons else 0.0
        return self.right_reasons / self.right_answers


class RrrLoss(NamedTuple):
    loss: Node
    breakdown: LossBreakdown
    parameters: list[Node]


def check_targets(y: npt.ArrayLike) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or not (np.isin(y, (0.0, 1.0)).all() and (y.sum(axis=1) == 1).all()):  # noqa: PLR2004
        msg = "Targets must be one-hot rows"
        raise TargetEncodingError(msg)
    return y


def check_annotations(A: npt.ArrayLike | None, shape: tuple[int, ...]) -> np.ndarray:
    """Returns A as a float array, zeros when None."""
    if A is None:
        return np.zeros(shape)
    A = np.asarray(A, dtype=np.float64)
    if A.shape != shape:
        msg = f"Annotation matrix has shape {A.shape}, inputs have shape {shape}"
        raise AnnotationMatrixError(msg)
    if not np.isin(A, (0.0, 1.0)).all():
        msg = "Annotation matrix entries must be 0 or 1"
        raise AnnotationMatrixError(msg)
    return A


def _record_terms(graph: Graph, parameters: list[Node], X: np.ndarray, y: np.ndarray, A: np.ndarray) -> tuple[Node, Node | None]:
    """Records (cross-entropy, unweighted right-reasons) on `graph`; the penalty is None when A is all zeros."""
    penalize = bool(A.any())
    inputs = graph.variable(X) if penalize else graph.constant(X)
    _, logprobs = build_forward(parameters, inputs)
    right_answers = scale(reduce_sum(multiply(graph.constant(y), logprobs)), -1.0)
    if not penalize:
        return right_answers, None
    (input_gradient,) = grad_nodes(reduce_sum(logprobs), [inputs])
    return right_answers, reduce_sum(square(multiply(graph.constant(A), input_gradient)))


class LossTerms(NamedTuple):
    right_answers: Node
    right_reasons: Node
    regular: Node
    total: Node
    raw_right_reasons: Node | None


def record_loss(
    graph: Graph, parameters: list[Node], X: np.ndarray, y: np.ndarray, A: np.ndarray, lambda1: float, lambda2: float
) -> LossTerms:
    """Records every loss term on `graph` for already validated X, y and A."""
    right_answers, raw_right_reasons = _record_terms(graph, parameters, X, y, A)

    norm = reduce_sum(square(parameters[0]))
    for node in parameters[1:]:
        norm = norm + reduce_sum(square(node))
    regular = scale(norm, lambda2)

    right_reasons = graph.constant(0.0) if raw_right_reasons is None else scale(raw_right_reasons, lambda1)
    total = right_answers + right_reasons + regular
    return LossTerms(right_answers, right_reasons, regular, total, raw_right_reasons)


def rrr_loss(params: Params, X: npt.ArrayLike, y: npt.ArrayLike, A: npt.ArrayLike | None, lambda1: float, lambda2: float) -> RrrLoss:
    """
    Records the full loss with the parameters as variables.

    The input-gradient term is itself a recorded gradient, so differentiating the
    returned loss node with respect to `parameters` goes through the penalty exactly.

    Raises:
        TargetEncodingError: If y rows are not one-hot.
        AnnotationMatrixError: If A is not binary or does not match X.
    """
    X = np.asarray(X, dtype=np.float64)
    y = check_targets(y)
    A = check_annotations(A, X.shape)

    graph = Graph()
    parameters = [graph.variable(array) for array in params.arrays()]
    terms = record_loss(graph, parameters, X, y, A, lambda1, lambda2)

    breakdown = LossBreakdown(
        right_answers=float(terms.right_answers.value),
        right_reasons=float(terms.right_reasons.value),
        regular=float(terms.regular.value),
        total=float(terms.total.value),
        raw_right_reasons=0.0 if terms.raw_right_reasons is None else float(terms.raw_right_reasons.value),
    )
    return RrrLoss(terms.total, breakdown, parameters)


def loss_gradients(
    params: Params, X: npt.ArrayLike, y: npt.ArrayLike, A: npt.ArrayLike | None, lambda1: float, lambda2: float
) -> tuple[list[np.ndarray], LossBreakdown]:
    """Parameter gradients [dW0, db0, ...] of the loss, and its breakdown."""
    result = rrr_loss(params, X, y, A, lambda1, lambda2)
    return gradient(result.loss, result.parameters), result.breakdown


def loss_breakdown(
    params: Params,
    X: npt.ArrayLike,
    y: npt.ArrayLike,
    A: npt.ArrayLike | None,
    lambda1: float,
    lambda2: float,
    chunk_size: int = 4096,
) -> LossBreakdown:
    """Evaluates the loss terms over a whole dataset in row chunks, without parameter gradients."""
    X = np.asarray(X, dtype=np.float64)
    y = check_targets(y)
    A = check_annotations(A, X.shape)

    right_answers = 0.0
    raw_right_reasons = 0.0
    for start in range(0, X.shape[0], chunk_size):
        rows = slice(start, start + chunk_size)
        graph = Graph()
        parameters = [graph.constant(array) for array in params.arrays()]
        answers, reasons = _record_terms(graph, parameters, X[rows], y[rows], A[rows])
        right_answers += float(answers.value)
        if reasons is not None:
            raw_right_reasons += float(reasons.value)

    regular = lambda2 * sum(float(np.sum(np.square(array))) for array in params.arrays())
    right_reasons = lambda1 * raw_right_reasons
    return LossBreakdown(
        right_answers=right_answers,
        right_reasons=right_reasons,
        regular=regular,
        total=right_answers + right_reasons + regular,
        raw_right_reasons=raw_right_reasons,
    )

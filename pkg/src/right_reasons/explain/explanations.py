"""
Input-gradient explanations and magnitude-ratio masks.

An input gradient is the normal of the model's decision surface at an example: its
large components name the input features that would most change the prediction.
"""

from enum import StrEnum
from typing import Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from right_reasons.autodiff.tape import exp, gradient, reduce_sum, select
from right_reasons.errors.explain import CutoffError, ExplanationTargetError
from right_reasons.model.mlp import Params, forward


class ExplanationTarget(StrEnum):
    """The scalar whose input gradient is taken, per example."""

    SUM_LOGPROB = "sum-logprob"
    PREDICTED_PROB = "predicted-prob"
    CLASS_PROB = "class-prob"


class ExplanationSet(BaseModel):
    """Per-example input gradients of one target."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gradients: np.ndarray = Field(..., description="One gradient row per example, shaped like X.")
    target: ExplanationTarget
    class_index: int | None = Field(None, description="The class for CLASS_PROB targets.")
    params_fingerprint: str = Field(..., description="Fingerprint of the parameters that produced the gradients.")

    @model_validator(mode="after")
    def check_finite(self) -> Self:
        if self.gradients.ndim != 2 or not np.isfinite(self.gradients).all():  # noqa: PLR2004
            msg = "Explanation gradients must be a finite 2-D array"
            raise ExplanationTargetError(msg)
        return self

    @property
    def target_label(self) -> str:
        return f"{self.target}({self.class_index})" if self.target is ExplanationTarget.CLASS_PROB else str(self.target)


class Mask(BaseModel):
    """Binary selection of gradient components whose magnitude ratio is at least `cutoff`."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bits: np.ndarray = Field(..., description="0/1 matrix shaped like the gradients.")
    cutoff: float = Field(..., gt=0, le=1)

    @property
    def selected_fraction(self) -> float:
        """Mean fraction of components selected per row."""
        return float(self.bits.mean()) if self.bits.size else 0.0


def explain(params: Params, X: npt.ArrayLike, target: ExplanationTarget | str = ExplanationTarget.SUM_LOGPROB, class_index: int | None = None) -> ExplanationSet:
    """
    Gradients of the chosen per-example target with respect to each input row.

    Rows are independent, so the gradient of the summed target over the batch gives
    every row's own gradient at once.

    Raises:
        ExplanationTargetError: If CLASS_PROB is requested without a valid class index.
    """
    target = ExplanationTarget(target)
    if target is ExplanationTarget.CLASS_PROB and (class_index is None or not 0 <= class_index < params.output_dim):
        msg = f"Class index {class_index} is not valid for a model with {params.output_dim} classes"
        raise ExplanationTargetError(msg)

    result = forward(params, X, differentiable_inputs=True)
    rows = result.probs.shape[0]
    if target is ExplanationTarget.SUM_LOGPROB:
        root = reduce_sum(result.logprobs)
    elif target is ExplanationTarget.PREDICTED_PROB:
        predicted = result.probs.argmax(axis=1)
        root = reduce_sum(select(exp(result.logprobs), (np.arange(rows), predicted)))
    else:
        root = reduce_sum(select(exp(result.logprobs), (slice(None), class_index)))

    (gradients,) = gradient(root, [result.inputs])
    return ExplanationSet(
        gradients=np.array(gradients),
        target=target,
        class_index=class_index if target is ExplanationTarget.CLASS_PROB else None,
        params_fingerprint=params.fingerprint(),
    )


def magnitude_ratios(gradients: npt.ArrayLike) -> np.ndarray:
    """|g_nd| / max_d' |g_nd'| per row; rows that are entirely zero give zeros."""
    magnitudes = np.abs(np.asarray(gradients, dtype=np.float64))
    row_max = magnitudes.max(axis=1, keepdims=True) if magnitudes.size else magnitudes
    return np.divide(magnitudes, row_max, out=np.zeros_like(magnitudes), where=row_max > 0)


def mask_top(explanations: ExplanationSet, cutoff: float) -> Mask:
    """
    Selects components whose magnitude ratio is at least `cutoff` (closed comparison).

    Every nonzero row keeps at least its largest component; all-zero rows select nothing.

    Raises:
        CutoffError: If cutoff is outside (0, 1].
    """
    if not 0 < cutoff <= 1:
        msg = f"Mask cutoff must lie in (0, 1], got {cutoff}"
        raise CutoffError(msg)
    bits = magnitude_ratios(explanations.gradients) >= cutoff
    return Mask(bits=bits.astype(np.float64), cutoff=cutoff)

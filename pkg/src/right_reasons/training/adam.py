from collections.abc import Sequence
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from right_reasons.errors.training import NonFiniteGradientError, TrainingError
from right_reasons.model.mlp import Params
from right_reasons.training.settings import AdamSettings


class AdamState(BaseModel):
    """Moment estimates and the number of updates taken so far."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    step: int = Field(0, ge=0, description="Number of updates applied.")
    first_moment: list[np.ndarray] = Field(..., description="Running mean of gradients, one array per parameter.")
    second_moment: list[np.ndarray] = Field(..., description="Running mean of squared gradients, one array per parameter.")

    @classmethod
    def initial(cls, params: Params) -> Self:
        zeros = [np.zeros_like(array) for array in params.arrays()]
        return cls(step=0, first_moment=zeros, second_moment=[z.copy() for z in zeros])


def adam_step(state: AdamState, params: Params, gradients: Sequence[np.ndarray], settings: AdamSettings) -> tuple[Params, AdamState]:
    """
    Applies one bias-corrected Adam update.

    Raises:
        TrainingError: If the gradient shapes do not match the parameters.
        NonFiniteGradientError: If any gradient entry is NaN or infinite.
    """
    arrays = params.arrays()
    if len(gradients) != len(arrays) or any(g.shape != p.shape for g, p in zip(gradients, arrays, strict=False)):
        msg = f"Gradient shapes {[g.shape for g in gradients]} do not match parameter shapes {[p.shape for p in arrays]}"
        raise TrainingError(msg)
    for index, grad in enumerate(gradients):
        if not np.isfinite(grad).all():
            raise NonFiniteGradientError(index // 2, "weight" if index % 2 == 0 else "bias")

    step = state.step + 1
    first_correction = 1.0 - settings.beta1**step
    second_correction = 1.0 - settings.beta2**step
    updated, first_moment, second_moment = [], [], []
    for param, grad, m, v in zip(arrays, gradients, state.first_moment, state.second_moment, strict=True):
        m = settings.beta1 * m + (1.0 - settings.beta1) * grad
        v = settings.beta2 * v + (1.0 - settings.beta2) * np.square(grad)
        step_size = settings.learning_rate * (m / first_correction) / (np.sqrt(v / second_correction) + settings.epsilon)
        updated.append(param - step_size)
        first_moment.append(m)
        second_moment.append(v)

    return Params.from_arrays(updated), AdamState(step=step, first_moment=first_moment, second_moment=second_moment)

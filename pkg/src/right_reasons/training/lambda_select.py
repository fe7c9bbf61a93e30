"""
Choosing lambda1 by balancing the loss terms.

Rather than cross-validating on a set that shares the training confounds, lambda1 is
raised until the right-reasons term is within an order of magnitude of the
cross-entropy.
"""

import math
from collections.abc import Sequence
from typing import Literal

import numpy.typing as npt
from pydantic import BaseModel, Field

from right_reasons.datasets.schema import LabeledDataset
from right_reasons.errors.training import LambdaGridError
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.training.settings import RrrConfig
from right_reasons.training.trainer import train

logger = BASE_LOGGER.getChild("lambda_select")

BALANCED_RATIO_RANGE = (0.1, 10.0)
DEFAULT_TRIAL_EPOCHS = 8

Criterion = Literal["final", "initial"]


class LambdaTrial(BaseModel):
    """Term magnitudes for one grid value, at initialization and after the trial run."""

    lambda1: float
    initial_right_answers: float
    initial_right_reasons: float
    final_right_answers: float
    final_right_reasons: float
    final_raw_right_reasons: float = Field(..., description="Converged right-reasons magnitude before weighting by lambda1.")
    initial_ratio: float
    final_ratio: float
    train_accuracy: float | None = Field(None, description="Training accuracy after the trial run (None without epochs).")
    qualifies: bool = Field(..., description="Whether the ratio used for selection lies in [0.1, 10].")


class LambdaReport(BaseModel):
    criterion: Criterion = Field(..., description="Which term magnitudes drove the selection.")
    trials: list[LambdaTrial] = Field(default_factory=list)
    selected: float
    fallback: bool = Field(False, description="True when no grid value qualified and the ratio nearest 1 was taken.")


def _distance_from_one(ratio: float) -> float:
    if ratio <= 0 or math.isinf(ratio):
        return math.inf
    return abs(math.log10(ratio))


def select_lambda1(
    dataset: LabeledDataset,
    A: npt.ArrayLike | None,
    grid: Sequence[float],
    config: RrrConfig,
    trial_epochs: int = DEFAULT_TRIAL_EPOCHS,
    criterion: Criterion = "final",
) -> tuple[float, LambdaReport]:
    """
    Trains briefly at each grid value and picks the smallest one with balanced terms.

    Args:
        dataset: Training data.
        A: Annotation matrix (the dataset's own when None).
        grid: Candidate lambda1 values, strictly increasing.
        config: Base training configuration; lambda1 and epochs are overridden per trial.
        trial_epochs: Epoch budget per trial (capped by config.epochs).
        criterion: Compare converged ("final") or initial term magnitudes.

    Returns:
        The selected lambda1 and the full report. If no value has a ratio in [0.1, 10],
        the value whose ratio is nearest 1 is returned and the report is flagged.

    Raises:
        LambdaGridError: If the grid is empty or not strictly increasing.
    """
    grid = [float(value) for value in grid]
    if not grid:
        msg = "lambda1 grid is empty"
        raise LambdaGridError(msg)
    if any(b <= a for a, b in zip(grid, grid[1:], strict=False)):
        msg = f"lambda1 grid must be strictly increasing, got {grid}"
        raise LambdaGridError(msg)

    epochs = 0 if criterion == "initial" else min(config.epochs, trial_epochs)
    low, high = BALANCED_RATIO_RANGE
    trials = []
    for value in grid:
        _, history = train(config.model_copy(update={"lambda1": value, "epochs": epochs}), dataset, A)
        final = history.final
        ratio = history.initial.reasons_to_answers if criterion == "initial" else final.reasons_to_answers
        trials.append(
            LambdaTrial(
                lambda1=value,
                initial_right_answers=history.initial.right_answers,
                initial_right_reasons=history.initial.right_reasons,
                final_right_answers=final.right_answers,
                final_right_reasons=final.right_reasons,
                final_raw_right_reasons=final.raw_right_reasons,
                initial_ratio=history.initial.reasons_to_answers,
                final_ratio=final.reasons_to_answers,
                train_accuracy=history.records[-1].train_accuracy if history.records else None,
                qualifies=low <= ratio <= high,
            )
        )
        logger.info(f"lambda1={value:g}: {criterion} reasons/answers ratio {ratio:.4g}")

    qualifying = [trial for trial in trials if trial.qualifies]
    if qualifying:
        return qualifying[0].lambda1, LambdaReport(criterion=criterion, trials=trials, selected=qualifying[0].lambda1)

    def ratio_of(trial: LambdaTrial) -> float:
        return trial.initial_ratio if criterion == "initial" else trial.final_ratio

    nearest = min(trials, key=lambda trial: _distance_from_one(ratio_of(trial)))
    logger.warning(f"No lambda1 in {grid} balances the loss terms; falling back to {nearest.lambda1:g} (ratio nearest 1)")
    return nearest.lambda1, LambdaReport(criterion=criterion, trials=trials, selected=nearest.lambda1, fallback=True)

"""
Find another explanation: train, mask where the input gradients were largest, add the
mask to the annotations and train again, until accuracy drops or explanations stop
changing.

    A_0 = 0
    theta_i = argmin L(theta, X, y, A_i)
    A_{i+1} = M_c[grad_X | theta_i] | A_i
"""

from collections.abc import Sequence
from itertools import combinations
from typing import Literal, Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from right_reasons.datasets.schema import LabeledDataset
from right_reasons.errors.fae import EmptyDatasetError, EnsembleSizeError, MaskShapeError
from right_reasons.explain.explanations import ExplanationTarget, explain, mask_top
from right_reasons.model.mlp import Params, accuracy, predict
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.training.settings import RrrConfig
from right_reasons.training.trainer import TrainHistory, train

logger = BASE_LOGGER.getChild("fae")

DEFAULT_ACCURACY_DROP = 0.05
TOY_COLOR_LAMBDA1_SCHEDULE = [1e3, 1e6]
DEFAULT_LAMBDA1_SCHEDULE = [1e3]

StopReason = Literal["max-iterations", "accuracy-floor", "explanations-converged"]


def default_lambda1_schedule(dataset_name: str) -> list[float]:
    """Toy Color raises the penalty once both rules are blocked; everything else keeps 1e3."""
    return list(TOY_COLOR_LAMBDA1_SCHEDULE if dataset_name == "toy-color" else DEFAULT_LAMBDA1_SCHEDULE)


class FaeConfig(BaseModel):
    cutoff: float = Field(0.67, gt=0, le=1, description="Magnitude-ratio cutoff c of the mask M_c.")
    lambda1_schedule: list[float] = Field(
        default_factory=lambda: list(DEFAULT_LAMBDA1_SCHEDULE),
        min_length=1,
        description="lambda1 per iteration; the last value repeats when the schedule is shorter than the run.",
    )
    max_iterations: int = Field(3, ge=1, description="Number of models to train at most.")
    accuracy_floor: float | None = Field(
        None, description="Stop when test accuracy falls below this (default: iteration-0 test accuracy minus 0.05)."
    )
    overlap_ceiling: float = Field(
        0.98, ge=0, le=1, description="Stop when the new-mask fraction falls below 1 minus this value."
    )
    training: RrrConfig = Field(default_factory=RrrConfig, description="Training settings shared by every iteration.")

    @model_validator(mode="after")
    def check_schedule(self) -> Self:
        if any(value < 0 for value in self.lambda1_schedule):
            msg = f"lambda1 schedule must be non-negative, got {self.lambda1_schedule}"
            raise ValueError(msg)
        return self

    def lambda1_at(self, iteration: int) -> float:
        return self.lambda1_schedule[min(iteration, len(self.lambda1_schedule) - 1)]


class FaeIteration(BaseModel):
    """One model of the ensemble and the annotations it was trained with."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int = Field(..., ge=0)
    annotations: np.ndarray = Field(..., description="A_i, the annotation matrix this model was trained with.")
    mask: np.ndarray = Field(..., description="M_c bits of this model's input gradients on the training inputs.")
    params: Params
    lambda1: float
    history: TrainHistory
    train_accuracy: float
    test_accuracy: float
    mask_fraction: float = Field(..., description="Mean fraction of components selected by this model's M_c mask.")
    new_mask_fraction: float = Field(..., description="1 - overlap(A_{i+1}, A_i).")


class FaeTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    iterations: list[FaeIteration] = Field(default_factory=list)
    final_annotations: np.ndarray = Field(..., description="A after the last iteration's mask was added.")
    stop_reason: StopReason
    cutoff: float

    @property
    def params(self) -> list[Params]:
        return [iteration.params for iteration in self.iterations]


def explanation_overlap(mask_a: npt.ArrayLike, mask_b: npt.ArrayLike) -> float:
    """
    Jaccard overlap |a & b| / |a | b| of the set bits; two empty masks overlap fully.

    Raises:
        MaskShapeError: If the masks differ in shape.
    """
    a, b = np.asarray(mask_a).astype(bool), np.asarray(mask_b).astype(bool)
    if a.shape != b.shape:
        msg = f"Cannot compare masks of shapes {a.shape} and {b.shape}"
        raise MaskShapeError(msg)
    union = np.count_nonzero(a | b)
    return 1.0 if union == 0 else np.count_nonzero(a & b) / union


def ensemble_disagreement(params_list: Sequence[Params], X: npt.ArrayLike) -> np.ndarray:
    """
    Per-example fraction of model pairs whose predicted labels differ.

    Raises:
        EnsembleSizeError: With fewer than two models.
    """
    if len(params_list) < 2:  # noqa: PLR2004
        msg = f"Disagreement needs at least two models, got {len(params_list)}"
        raise EnsembleSizeError(msg)
    predictions = [predict(params, X) for params in params_list]
    pairs = list(combinations(predictions, 2))
    return np.mean([first != second for first, second in pairs], axis=0)


def run_fae(train_set: LabeledDataset, test_set: LabeledDataset, config: FaeConfig) -> FaeTrace:
    """
    Trains a sequence of models, each forbidden from using the features the earlier ones relied on.

    Masks are taken from the sum-of-log-probabilities input gradients on the training inputs.

    Raises:
        EmptyDatasetError: If either set has no rows.
    """
    if train_set.n_examples == 0 or test_set.n_examples == 0:
        msg = f"FAE needs nonempty train and test sets, got {train_set.n_examples} and {test_set.n_examples} rows"
        raise EmptyDatasetError(msg)

    annotations = np.zeros_like(train_set.X)
    iterations: list[FaeIteration] = []
    floor = config.accuracy_floor
    stop_reason: StopReason = "max-iterations"

    for index in range(config.max_iterations):
        lambda1 = config.lambda1_at(index)
        params, history = train(config.training.model_copy(update={"lambda1": lambda1}), train_set, annotations, held_out=test_set)
        train_accuracy = accuracy(params, train_set.X, train_set.labels)
        test_accuracy = accuracy(params, test_set.X, test_set.labels)

        mask = mask_top(explain(params, train_set.X, ExplanationTarget.SUM_LOGPROB), config.cutoff)
        accumulated = np.maximum(annotations, mask.bits)
        new_mask_fraction = 1.0 - explanation_overlap(accumulated, annotations)
        iterations.append(
            FaeIteration(
                index=index,
                annotations=annotations,
                mask=mask.bits,
                params=params,
                lambda1=lambda1,
                history=history,
                train_accuracy=train_accuracy,
                test_accuracy=test_accuracy,
                mask_fraction=mask.selected_fraction,
                new_mask_fraction=new_mask_fraction,
            )
        )
        logger.info(
            f"FAE iteration {index} (lambda1={lambda1:g}): train accuracy {train_accuracy:.4f}, "
            f"test accuracy {test_accuracy:.4f}, new mask fraction {new_mask_fraction:.4f}"
        )
        annotations = accumulated

        if floor is None:
            floor = test_accuracy - DEFAULT_ACCURACY_DROP
        elif test_accuracy < floor:
            stop_reason = "accuracy-floor"
            logger.info(f"Stopping FAE: test accuracy {test_accuracy:.4f} fell below {floor:.4f}")
            break
        if new_mask_fraction < 1.0 - config.overlap_ceiling:
            stop_reason = "explanations-converged"
            logger.info(f"Stopping FAE: only {new_mask_fraction:.4f} of the mask is new")
            break

    return FaeTrace(iterations=iterations, final_annotations=annotations, stop_reason=stop_reason, cutoff=config.cutoff)

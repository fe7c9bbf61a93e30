import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field

from right_reasons.datasets.schema import LabeledDataset
from right_reasons.model.mlp import Params, accuracy, init_params
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.training.adam import AdamState, adam_step
from right_reasons.training.loss import LossBreakdown, check_annotations, loss_breakdown, loss_gradients
from right_reasons.training.settings import RrrConfig

logger = BASE_LOGGER.getChild("training")


class EpochRecord(BaseModel):
    """Full-dataset measurements taken after an epoch."""

    epoch: int = Field(..., ge=0, description="Zero-based epoch index.")
    loss: LossBreakdown = Field(..., description="Loss terms over the whole training set.")
    train_accuracy: float = Field(..., ge=0, le=1, description="Accuracy on the training set.")
    held_out_accuracy: float | None = Field(None, description="Accuracy on the held-out set, when one was given.")


class TrainHistory(BaseModel):
    """The loss at initialization plus one record per completed epoch."""

    initial: LossBreakdown = Field(..., description="Loss terms at the initial parameters.")
    records: list[EpochRecord] = Field(default_factory=list, description="One entry per completed epoch.")
    stopped_early: bool = Field(False, description="Whether the early-stop rule ended training.")

    @property
    def epochs_completed(self) -> int:
        return len(self.records)

    @property
    def final(self) -> LossBreakdown:
        """The latest loss breakdown (the initial one when no epoch ran)."""
        return self.records[-1].loss if self.records else self.initial


def annotate_rows(mask: npt.ArrayLike, count: int, seed: int) -> np.ndarray:
    """Keeps the annotation on `count` randomly chosen rows and zeroes the rest."""
    mask = np.asarray(mask, dtype=np.float64)
    keep = np.random.default_rng(seed).choice(mask.shape[0], size=min(count, mask.shape[0]), replace=False)
    annotated = np.zeros_like(mask)
    annotated[keep] = mask[keep]
    return annotated


def _should_stop(records: list[EpochRecord], patience: int, tolerance: float) -> bool:
    if not patience or len(records) <= patience:
        return False
    latest, earlier = records[-1], records[-1 - patience]
    return (
        abs(latest.train_accuracy - earlier.train_accuracy) < tolerance
        and abs(latest.loss.total - earlier.loss.total) < tolerance
    )


def train(
    config: RrrConfig,
    dataset: LabeledDataset,
    A: npt.ArrayLike | None = None,
    held_out: LabeledDataset | None = None,
) -> tuple[Params, TrainHistory]:
    """
    Trains a fresh network with the right-reasons loss.

    Args:
        config: Loss weights, optimizer and schedule.
        dataset: The training set; its own A is used when `A` is None.
        A: Annotation matrix overriding the dataset's.
        held_out: Optional set whose accuracy is recorded after every epoch.

    Returns:
        The final parameters and the training history.
    """
    X, y = dataset.X, dataset.y
    A = dataset.A if A is None else check_annotations(A, X.shape)
    labels = dataset.labels

    params = init_params(dataset.n_features, dataset.n_classes, config.seed, config.hidden_sizes)
    history = TrainHistory(initial=loss_breakdown(params, X, y, A, config.lambda1, config.lambda2))
    logger.info(
        f"Training on '{dataset.name}' ({dataset.n_examples} rows, {int(A.any(axis=1).sum())} annotated) "
        f"with lambda1={config.lambda1}, lambda2={config.lambda2}, {config.epochs} epochs"
    )

    rng = np.random.default_rng([config.seed, 1])
    pinned = np.flatnonzero(A.any(axis=1)) if config.pin_annotated else np.empty(0, dtype=np.int64)
    state = AdamState.initial(params)

    for epoch in range(config.epochs):
        order = rng.permutation(dataset.n_examples)
        for start in range(0, dataset.n_examples, config.batch_size):
            batch = order[start : start + config.batch_size]
            if pinned.size:
                batch = np.union1d(batch, pinned)
            gradients, breakdown = loss_gradients(params, X[batch], y[batch], A[batch], config.lambda1, config.lambda2)
            params, state = adam_step(state, params, gradients, config.adam)
            logger.debug(f"epoch {epoch} batch {start // config.batch_size}: total {breakdown.total:.6g}")

        record = EpochRecord(
            epoch=epoch,
            loss=loss_breakdown(params, X, y, A, config.lambda1, config.lambda2),
            train_accuracy=accuracy(params, X, labels),
            held_out_accuracy=accuracy(params, held_out.X, held_out.labels) if held_out is not None else None,
        )
        history.records.append(record)
        logger.info(
            f"epoch {epoch}: total {record.loss.total:.6g} (answers {record.loss.right_answers:.6g}, "
            f"reasons {record.loss.right_reasons:.6g}), train accuracy {record.train_accuracy:.4f}"
        )

        if _should_stop(history.records, config.early_stop_patience, config.early_stop_tolerance):
            logger.info(f"Stopping early after epoch {epoch}: accuracy and loss changed less than {config.early_stop_tolerance}")
            history.stopped_early = True
            break

    return params, history

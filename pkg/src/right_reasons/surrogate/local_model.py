"""Weighted sparse linear fits to a black box's outputs around one instance."""

from collections.abc import Callable, Sequence
from itertools import combinations

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field
from sklearn.linear_model import Ridge

from right_reasons.errors.surrogate import LocalFitError
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.surrogate.perturb import PerturbationScheme, perturb

logger = BASE_LOGGER.getChild("surrogate")

DEFAULT_RIDGE = 1.0
PREDICT_CHUNK = 1024

PredictFn = Callable[[np.ndarray], np.ndarray]


class SelectedFeature(BaseModel):
    index: int = Field(..., description="Interpretable unit index.")
    weight: float = Field(..., description="Coefficient of the unit's presence code.")


class LocalExplanation(BaseModel):
    """The top-k units of a local linear model, strongest first."""

    features: list[SelectedFeature] = Field(default_factory=list)
    intercept: float
    score: float = Field(..., description="Weighted R^2 of the refit on the samples.")
    degenerate: bool = Field(False, description="True when the minimum-norm least-squares fallback was used.")
    predicted_class: int | None = Field(None, description="Class whose probability was explained.")
    units: list[list[int]] = Field(default_factory=list, description="Input columns of every unit.")

    def selected_indices(self) -> set[int]:
        return {feature.index for feature in self.features}


def _weighted_r2(design: np.ndarray, targets: np.ndarray, weights: np.ndarray, coef: np.ndarray, intercept: float) -> float:
    residual = targets - design @ coef - intercept
    centered = targets - np.average(targets, weights=weights)
    total = float(np.sum(weights * centered**2))
    return 1.0 if total == 0 else 1.0 - float(np.sum(weights * residual**2)) / total


def _fit(design: np.ndarray, targets: np.ndarray, weights: np.ndarray, ridge: float) -> tuple[np.ndarray, float, bool]:
    try:
        model = Ridge(alpha=ridge).fit(design, targets, sample_weight=weights)
        coef, intercept = np.asarray(model.coef_, dtype=np.float64), float(model.intercept_)
        if np.isfinite(coef).all() and np.isfinite(intercept):
            return coef, intercept, False
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.debug(f"Ridge fit failed: {e}")

    logger.warning("Local fit is singular; using the minimum-norm least-squares solution")
    root = np.sqrt(weights / weights.sum())
    mean_design = np.average(design, axis=0, weights=weights)
    mean_target = np.average(targets, weights=weights)
    coef, *_ = np.linalg.lstsq(root[:, None] * (design - mean_design), root * (targets - mean_target), rcond=None)
    return coef, float(mean_target - mean_design @ coef), True


def fit_local(codes: npt.ArrayLike, outputs: npt.ArrayLike, weights: npt.ArrayLike, k: int, ridge: float = DEFAULT_RIDGE) -> LocalExplanation:
    """
    Weighted ridge regression of outputs on presence codes, keeping the k strongest units.

    All units are fit first; the k with the largest |coefficient| (lower index first on
    ties) are refit alone. With k >= m the first fit is the answer.

    Raises:
        LocalFitError: If there are fewer than k + 1 samples or the inputs disagree in length.
    """
    codes = np.asarray(codes, dtype=np.float64)
    outputs = np.asarray(outputs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if codes.ndim != 2 or outputs.shape != (codes.shape[0],) or weights.shape != (codes.shape[0],):  # noqa: PLR2004
        msg = f"Codes {codes.shape}, outputs {outputs.shape} and weights {weights.shape} do not line up"
        raise LocalFitError(msg)
    if codes.shape[0] < k + 1:
        msg = f"Need at least {k + 1} samples to select {k} units, got {codes.shape[0]}"
        raise LocalFitError(msg)

    coef, intercept, degenerate = _fit(codes, outputs, weights, ridge)
    selected = np.arange(codes.shape[1])
    if k < codes.shape[1]:
        selected = np.argsort(-np.abs(coef), kind="stable")[:k]
        coef, intercept, refit_degenerate = _fit(codes[:, selected], outputs, weights, ridge)
        degenerate = degenerate or refit_degenerate

    score = _weighted_r2(codes[:, selected], outputs, weights, coef, intercept)
    order = np.argsort(-np.abs(coef), kind="stable")
    return LocalExplanation(
        features=[SelectedFeature(index=int(selected[i]), weight=float(coef[i])) for i in order],
        intercept=intercept,
        score=score,
        degenerate=degenerate,
    )


def predict_in_chunks(predict_fn: PredictFn, samples: np.ndarray, chunk: int = PREDICT_CHUNK) -> np.ndarray:
    return np.concatenate([predict_fn(samples[start : start + chunk]) for start in range(0, samples.shape[0], chunk)])


def explain_instance(
    predict_fn: PredictFn, x: npt.ArrayLike, scheme: PerturbationScheme, k: int, seed: int, ridge: float = DEFAULT_RIDGE
) -> LocalExplanation:
    """
    Explains the model's predicted class at x with a k-unit local linear model.

    Args:
        predict_fn: Maps an (S, D) batch to (S, K) class probabilities.
        x: The instance.
        scheme: How neighbors are sampled.
        k: Number of units to keep.
        seed: Seeds the neighborhood sample.
        ridge: Ridge strength of the local fits.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    predicted = int(np.argmax(predict_fn(x[None, :])[0]))
    neighborhood = perturb(x, scheme, seed)
    outputs = predict_in_chunks(predict_fn, neighborhood.samples)[:, predicted]
    local = fit_local(neighborhood.codes, outputs, neighborhood.weights, k, ridge)
    return local.model_copy(update={"predicted_class": predicted, "units": neighborhood.units})


def unit_scores(gradient_row: npt.ArrayLike, units: Sequence[Sequence[int]]) -> np.ndarray:
    """Sums gradient components over each unit's columns."""
    gradient_row = np.asarray(gradient_row, dtype=np.float64).ravel()
    return np.array([gradient_row[list(unit)].sum() for unit in units])


def sign_agreement(gradient_row: npt.ArrayLike, local: LocalExplanation) -> float | None:
    """
    Fraction of units selected by both methods whose signs agree.

    The gradient's selection is its top-|k| units by magnitude, with k the number of
    surrogate features. Returns None when the selections do not intersect.
    """
    scores = unit_scores(gradient_row, local.units)
    top = set(np.argsort(-np.abs(scores), kind="stable")[: len(local.features)].tolist())
    joint = [feature for feature in local.features if feature.index in top]
    if not joint:
        return None
    return float(np.mean([np.sign(feature.weight) == np.sign(scores[feature.index]) for feature in joint]))


def topk_jaccard(selections: Sequence[set[int]]) -> float:
    """Mean pairwise Jaccard overlap of top-k sets; a single set overlaps itself fully."""
    if len(selections) < 2:  # noqa: PLR2004
        return 1.0
    overlaps = [len(a & b) / len(a | b) if a | b else 1.0 for a, b in combinations(selections, 2)]
    return float(np.mean(overlaps))

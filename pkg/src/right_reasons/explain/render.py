"""
Explanation artifacts: per-example feature weights with display opacities.

opacity_i = |w_i| / max_j |w_j| within an example. Grid inputs are reduced to one
weight per pixel by keeping the channel gradient of largest magnitude.
"""

from collections.abc import Sequence
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field

from right_reasons.datasets.schema import DatasetKind, GridKind, TabularKind, TextKind
from right_reasons.errors.explain import RenderError
from right_reasons.explain.explanations import ExplanationSet, Mask, magnitude_ratios
from right_reasons.shared.logging import BASE_LOGGER

logger = BASE_LOGGER.getChild("render")

ARTIFACT_FORMAT_VERSION = 1


class FeatureWeight(BaseModel):
    index: int = Field(..., description="Feature column, or pixel index row * width + column for grids.")
    name: str | None = Field(None, description="Vocabulary term or feature name, when the layout has one.")
    weight: float = Field(..., description="Signed gradient component.")
    opacity: float = Field(..., ge=0, le=1, description="|weight| / largest |weight| in the example.")
    selected: bool = Field(False, description="Whether the mask selected this feature.")


class ExampleExplanation(BaseModel):
    example: int = Field(..., description="Row of the explained batch.")
    features: list[FeatureWeight] = Field(default_factory=list)


class ExplanationArtifact(BaseModel):
    """The structured document written for one explained batch."""

    format_version: int = ARTIFACT_FORMAT_VERSION
    kind: Literal["grid", "text", "tabular"]
    grid: GridKind | None = Field(None, description="Image dimensions for grid layouts.")
    feature_names: list[str] | None = Field(None, description="Column names for text and tabular layouts.")
    model_fingerprint: str
    target: str
    cutoff: float | None = Field(None, description="Mask cutoff, when a mask was rendered.")
    examples: list[ExampleExplanation] = Field(default_factory=list)


def _pixel_weights(values: np.ndarray, grid: GridKind) -> np.ndarray:
    """Collapses channels to the signed value of largest magnitude per pixel."""
    pixels = values.reshape(values.shape[0], grid.height * grid.width, grid.channels)
    strongest = np.abs(pixels).argmax(axis=2)[..., None]
    return np.take_along_axis(pixels, strongest, axis=2)[..., 0]


def render(
    explanations: ExplanationSet,
    mask: Mask | None,
    kind: DatasetKind,
    path: Path | None = None,
    X: npt.ArrayLike | None = None,
    examples: Sequence[int] | None = None,
) -> ExplanationArtifact:
    """
    Builds (and optionally writes) the explanation artifact for a batch.

    Args:
        explanations: Input gradients to display.
        mask: Optional selection to flag per feature.
        kind: Layout of the input columns.
        path: Where to write the JSON document.
        X: The explained inputs; for text layouts only words present in the document are listed.
        examples: Rows to include (all when None).

    Raises:
        RenderError: If the layout does not describe the gradient columns.
    """
    gradients = explanations.gradients
    if kind.size != gradients.shape[1]:
        msg = f"{kind.kind} layout describes {kind.size} features but gradients have {gradients.shape[1]} columns"
        raise RenderError(msg)
    if mask is not None and mask.bits.shape != gradients.shape:
        msg = f"Mask shape {mask.bits.shape} does not match gradients {gradients.shape}"
        raise RenderError(msg)

    selected = mask.bits.astype(bool) if mask is not None else np.zeros(gradients.shape, dtype=bool)
    names: list[str] | None = None
    if isinstance(kind, GridKind):
        weights = _pixel_weights(gradients, kind)
        selected = selected.reshape(gradients.shape[0], kind.height * kind.width, kind.channels).any(axis=2)
    else:
        weights = gradients
        names = kind.vocabulary if isinstance(kind, TextKind) else kind.feature_names

    present = None
    if isinstance(kind, TextKind) and X is not None:
        present = np.asarray(X) != 0

    rows = range(gradients.shape[0]) if examples is None else examples
    rendered = []
    for row in rows:
        columns = np.flatnonzero(present[row]) if present is not None else np.arange(weights.shape[1])
        opacities = magnitude_ratios(weights[row, columns][None, :])[0]
        rendered.append(
            ExampleExplanation(
                example=int(row),
                features=[
                    FeatureWeight(
                        index=int(column),
                        name=names[column] if names is not None else None,
                        weight=float(weights[row, column]),
                        opacity=float(opacity),
                        selected=bool(selected[row, column]),
                    )
                    for column, opacity in zip(columns, opacities, strict=True)
                ],
            )
        )

    artifact = ExplanationArtifact(
        kind=kind.kind,
        grid=kind if isinstance(kind, GridKind) else None,
        feature_names=names if isinstance(kind, TextKind | TabularKind) else None,
        model_fingerprint=explanations.params_fingerprint,
        target=explanations.target_label,
        cutoff=mask.cutoff if mask is not None else None,
        examples=rendered,
    )
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(artifact.model_dump_json(indent=2))
        logger.info(f"Wrote {kind.kind} explanation artifact for {len(rendered)} examples to {path}")
    return artifact


def load_artifact(path: Path) -> ExplanationArtifact:
    return ExplanationArtifact.model_validate_json(path.read_text())

"""The labeled dataset record shared by every generator, loader and experiment."""

import hashlib
from typing import Annotated, Any, Literal, Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from right_reasons.errors.datasets import DatasetShapeError


class GridKind(BaseModel):
    """Image inputs flattened row-major from (height, width, channels)."""

    kind: Literal["grid"] = "grid"
    height: int = Field(..., ge=1, description="Number of pixel rows.")
    width: int = Field(..., ge=1, description="Number of pixel columns.")
    channels: int = Field(1, ge=1, description="Number of values per pixel.")

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels


class TextKind(BaseModel):
    """Bag-of-words inputs, one column per vocabulary term."""

    kind: Literal["text"] = "text"
    vocabulary: list[str] = Field(..., description="Term for each input column.")

    @property
    def size(self) -> int:
        return len(self.vocabulary)


class TabularKind(BaseModel):
    """Named numeric features."""

    kind: Literal["tabular"] = "tabular"
    feature_names: list[str] = Field(..., description="Name of each input column.")

    @property
    def size(self) -> int:
        return len(self.feature_names)


DatasetKind = Annotated[GridKind | TextKind | TabularKind, Field(discriminator="kind")]


def one_hot(labels: npt.ArrayLike, num_classes: int) -> np.ndarray:
    """Encodes integer labels as float64 one-hot rows."""
    labels = np.asarray(labels, dtype=np.int64)
    encoded = np.zeros((labels.size, num_classes))
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded


class LabeledDataset(BaseModel):
    """
    Inputs X (N x D), one-hot targets y (N x K) and a binary annotation matrix A (N x D).

    A marks input components that should be irrelevant to each example's prediction;
    it defaults to all zeros.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = Field(..., description="Short dataset identifier, e.g. 'toy-color'.")
    X: np.ndarray = Field(..., description="Inputs, one example per row.")
    y: np.ndarray = Field(..., description="One-hot targets, one example per row.")
    A: np.ndarray = Field(..., description="Binary annotation matrix with the shape of X.")
    kind: DatasetKind = Field(..., description="How the input columns are laid out.")
    class_names: list[str] = Field(default_factory=list, description="Display name of each class.")
    split: str | None = Field(None, description="Which partition this is ('train', 'test'), if any.")

    @model_validator(mode="before")
    @classmethod
    def coerce_arrays(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            data["X"] = np.asarray(data["X"], dtype=np.float64)
            data["y"] = np.asarray(data["y"], dtype=np.float64)
            annotations = data.get("A")
            data["A"] = np.zeros_like(data["X"]) if annotations is None else np.asarray(annotations, dtype=np.float64)
        return data

    @model_validator(mode="after")
    def check_shapes(self) -> Self:
        if self.X.ndim != 2 or self.y.ndim != 2:  # noqa: PLR2004
            msg = f"Dataset '{self.name}' needs 2-D X and y, got {self.X.shape} and {self.y.shape}"
            raise DatasetShapeError(msg)
        if self.y.shape[0] != self.X.shape[0] or self.A.shape != self.X.shape:
            msg = f"Dataset '{self.name}' row counts disagree: X {self.X.shape}, y {self.y.shape}, A {self.A.shape}"
            raise DatasetShapeError(msg)
        if not (np.isin(self.y, (0.0, 1.0)).all() and (self.y.sum(axis=1) == 1).all()):
            msg = f"Dataset '{self.name}' targets must have exactly one 1 per row"
            raise DatasetShapeError(msg)
        if not np.isin(self.A, (0.0, 1.0)).all():
            msg = f"Dataset '{self.name}' annotations must be binary"
            raise DatasetShapeError(msg)
        if self.kind.size != self.X.shape[1]:
            msg = f"Dataset '{self.name}' has {self.X.shape[1]} columns but its {self.kind.kind} layout describes {self.kind.size}"
            raise DatasetShapeError(msg)
        return self

    @property
    def n_examples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return self.y.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return self.y.argmax(axis=1)

    def subset(self, indices: npt.ArrayLike, split: str | None = None) -> "LabeledDataset":
        """Returns the rows at `indices`, keeping metadata."""
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            name=self.name,
            X=self.X[indices],
            y=self.y[indices],
            A=self.A[indices],
            kind=self.kind,
            class_names=self.class_names,
            split=split if split is not None else self.split,
        )

    def with_annotations(self, annotations: npt.ArrayLike | None) -> "LabeledDataset":
        """Returns a copy whose A is replaced (None resets it to zeros)."""
        return LabeledDataset(
            name=self.name, X=self.X, y=self.y, A=annotations, kind=self.kind, class_names=self.class_names, split=self.split
        )

    def with_inputs(self, inputs: npt.ArrayLike) -> "LabeledDataset":
        """Returns a copy with X replaced and everything else kept."""
        return LabeledDataset(name=self.name, X=inputs, y=self.y, A=self.A, kind=self.kind, class_names=self.class_names, split=self.split)

    def fingerprint(self) -> str:
        digest = hashlib.sha256(self.name.encode())
        for array in (self.X, self.y, self.A):
            digest.update(str(array.shape).encode())
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()

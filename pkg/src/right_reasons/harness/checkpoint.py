"""
Versioned JSON checkpoints.

Floats are written in their shortest round-trip form, so load(save(c)) == c bitwise.
"""

import json
from pathlib import Path
from typing import Self

from pydantic import BaseModel, Field, ValidationError

from right_reasons.errors.harness import CheckpointError
from right_reasons.model.mlp import Params
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.training.settings import RrrConfig

logger = BASE_LOGGER.getChild("checkpoint")

CHECKPOINT_FORMAT_VERSION = 1


class Checkpoint(BaseModel):
    format_version: int = Field(CHECKPOINT_FORMAT_VERSION, description="Checkpoint layout version.")
    layer_sizes: list[int] = Field(..., description="Input, hidden and output widths.")
    weights: list[list[list[float]]] = Field(..., description="One (fan_in x fan_out) matrix per layer.")
    biases: list[list[float]] = Field(..., description="One bias vector per layer.")
    config: RrrConfig = Field(..., description="Training configuration that produced the parameters.")
    dataset_fingerprint: str = Field(..., description="Fingerprint of the training set.")
    metrics: dict[str, float] = Field(default_factory=dict, description="Final accuracies and loss terms.")

    @classmethod
    def from_params(cls, params: Params, config: RrrConfig, dataset_fingerprint: str, metrics: dict[str, float] | None = None) -> Self:
        return cls(
            layer_sizes=params.layer_sizes,
            weights=[layer.weight.tolist() for layer in params.layers],
            biases=[layer.bias.tolist() for layer in params.layers],
            config=config,
            dataset_fingerprint=dataset_fingerprint,
            metrics=metrics or {},
        )

    def to_params(self) -> Params:
        arrays = [array for weight, bias in zip(self.weights, self.biases, strict=True) for array in (weight, bias)]
        params = Params.from_arrays(arrays)
        if params.layer_sizes != self.layer_sizes:
            msg = f"Checkpoint declares layer sizes {self.layer_sizes} but holds {params.layer_sizes}"
            raise CheckpointError(msg)
        return params


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(checkpoint.model_dump_json(indent=1))
    logger.info(f"Wrote checkpoint {path} (layers {checkpoint.layer_sizes})")


def load_checkpoint(path: Path) -> Checkpoint:
    """
    Reads a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: If the file is missing, malformed or of another format version.
    """
    if not path.is_file():
        msg = f"Checkpoint {path} does not exist"
        raise CheckpointError(msg)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        msg = f"Checkpoint {path} is not valid JSON: {e}"
        raise CheckpointError(msg) from e
    version = data.get("format_version") if isinstance(data, dict) else None
    if version != CHECKPOINT_FORMAT_VERSION:
        msg = f"Checkpoint {path} has format version {version}, expected {CHECKPOINT_FORMAT_VERSION}"
        raise CheckpointError(msg)
    try:
        return Checkpoint.model_validate(data)
    except ValidationError as e:
        msg = f"Checkpoint {path} does not match the checkpoint layout: {e}"
        raise CheckpointError(msg) from e

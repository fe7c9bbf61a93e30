"""
The portable columnar text format for datasets.

    # {"format_version": 1, "name": ..., "kind": {...}, "class_names": [...], "split": ..., "n_classes": K}
    label,x_0,...,x_{D-1},a_0,...,a_{D-1}
    <integer label>,<%.17g inputs>,<0/1 annotations>

`%.17g` round-trips float64 values exactly.
"""

import csv
import json
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from right_reasons.datasets.schema import DatasetKind, LabeledDataset, one_hot
from right_reasons.errors.datasets import DatasetStorageError
from right_reasons.shared.logging import BASE_LOGGER

logger = BASE_LOGGER.getChild("storage")

STORAGE_FORMAT_VERSION = 1


class StoredDatasetHeader(BaseModel):
    format_version: int = Field(STORAGE_FORMAT_VERSION, description="Version of the columnar layout.")
    name: str
    kind: DatasetKind
    class_names: list[str] = Field(default_factory=list)
    split: str | None = None
    n_classes: int = Field(..., ge=1)


def save_dataset(dataset: LabeledDataset, path: Path) -> None:
    header = StoredDatasetHeader(
        name=dataset.name, kind=dataset.kind, class_names=dataset.class_names, split=dataset.split, n_classes=dataset.n_classes
    )
    columns = dataset.n_features
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        f.write(f"# {header.model_dump_json()}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["label", *(f"x_{d}" for d in range(columns)), *(f"a_{d}" for d in range(columns))])
        for label, inputs, annotations in zip(dataset.labels, dataset.X, dataset.A, strict=True):
            writer.writerow([int(label), *(f"{value:.17g}" for value in inputs), *(str(int(bit)) for bit in annotations)])
    logger.info(f"Saved {dataset.n_examples} rows of '{dataset.name}' to {path}")


def load_dataset(path: Path) -> LabeledDataset:
    """
    Reads a dataset written by save_dataset.

    Raises:
        DatasetStorageError: If the metadata line, header or any row is malformed.
    """
    with path.open(newline="") as f:
        first = f.readline()
        if not first.startswith("#"):
            msg = f"{path} does not start with a '#' metadata line"
            raise DatasetStorageError(msg)
        try:
            header = StoredDatasetHeader.model_validate(json.loads(first[1:]))
        except (json.JSONDecodeError, ValidationError) as e:
            msg = f"{path} has an unreadable metadata line: {e}"
            raise DatasetStorageError(msg) from e
        if header.format_version != STORAGE_FORMAT_VERSION:
            msg = f"{path} uses storage format {header.format_version}, expected {STORAGE_FORMAT_VERSION}"
            raise DatasetStorageError(msg)

        reader = csv.reader(f)
        columns = next(reader, None)
        width = header.kind.size
        if columns is None or len(columns) != 1 + 2 * width:
            msg = f"{path} column header does not describe {width} features"
            raise DatasetStorageError(msg)
        try:
            rows = np.array([[float(value) for value in row] for row in reader if row], dtype=np.float64).reshape(-1, 1 + 2 * width)
        except ValueError as e:
            msg = f"{path} holds a malformed row: {e}"
            raise DatasetStorageError(msg) from e

    return LabeledDataset(
        name=header.name,
        X=rows[:, 1 : 1 + width],
        y=one_hot(rows[:, 0].astype(np.int64), header.n_classes),
        A=rows[:, 1 + width :],
        kind=header.kind,
        class_names=header.class_names,
        split=header.split,
    )

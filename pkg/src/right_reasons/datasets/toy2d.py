"""Two- and three-class Gaussian blobs in the plane, for decision-boundary gradient fields."""

from typing import Literal

import numpy as np

from right_reasons.datasets.schema import LabeledDataset, TabularKind, one_hot
from right_reasons.errors.datasets import DatasetError

BLOB_STD = 0.3
MIN_EXAMPLES = 10

Toy2dKind = Literal["two-class", "three-class"]
CLASS_COUNTS: dict[str, int] = {"two-class": 2, "three-class": 3}


def blob_centers(num_classes: int) -> np.ndarray:
    """Centers evenly spaced on the unit circle, starting at (1, 0)."""
    angles = 2 * np.pi * np.arange(num_classes) / num_classes
    return np.column_stack([np.cos(angles), np.sin(angles)])


def gen_2d_toy(kind: Toy2dKind | str, n: int, seed: int) -> LabeledDataset:
    """
    Samples n points from isotropic Gaussians (std 0.3) labeled by their center.

    Class counts differ by at most one.

    Raises:
        DatasetError: If n < 10 or the kind is unknown.
    """
    if kind not in CLASS_COUNTS:
        msg = f"Unknown 2D toy kind '{kind}', expected one of {', '.join(CLASS_COUNTS)}"
        raise DatasetError(msg)
    if n < MIN_EXAMPLES:
        msg = f"2D toy data needs at least {MIN_EXAMPLES} points, got {n}"
        raise DatasetError(msg)
    num_classes = CLASS_COUNTS[kind]
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % num_classes)
    X = blob_centers(num_classes)[labels] + rng.normal(0.0, BLOB_STD, size=(n, 2))
    return LabeledDataset(
        name=f"toy-2d-{kind}",
        X=X,
        y=one_hot(labels, num_classes),
        kind=TabularKind(feature_names=["x1", "x2"]),
        class_names=[f"blob {index}" for index in range(num_classes)],
    )

"""
Toy Color: 5x5 RGB images over four colors, classified by two independent rules.

Class 0 images have four identical corner pixels AND three pairwise-distinct
top-middle pixels; class 1 images satisfy neither rule. Either rule alone is enough
to classify, which is what makes the dataset useful for rule switching.
"""

from typing import Literal

import numpy as np
import numpy.typing as npt

from right_reasons.datasets.schema import GridKind, LabeledDataset, one_hot
from right_reasons.errors.datasets import DatasetError
from right_reasons.shared.logging import BASE_LOGGER

logger = BASE_LOGGER.getChild("toy_color")

SIDE = 5
CHANNELS = 3
TOY_COLOR_KIND = GridKind(height=SIDE, width=SIDE, channels=CHANNELS)

# red, green, blue, yellow
COLORS = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]])

CORNER_PIXELS = ((0, 0), (0, SIDE - 1), (SIDE - 1, 0), (SIDE - 1, SIDE - 1))
TOP_MIDDLE_PIXELS = ((0, 1), (0, 2), (0, 3))

MaskName = Literal["corners", "top-middle", "pro-rule1", "pro-rule2", "anti-rule1", "anti-rule2"]
MASK_NAMES: tuple[str, ...] = ("corners", "top-middle", "pro-rule1", "pro-rule2", "anti-rule1", "anti-rule2")


def pixel_columns(pixels: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Flattened column indices (row * 5 + col) * 3 + channel of the given pixels."""
    return np.array([(row * SIDE + col) * CHANNELS + channel for row, col in pixels for channel in range(CHANNELS)])


CORNER_COLUMNS = pixel_columns(CORNER_PIXELS)
TOP_MIDDLE_COLUMNS = pixel_columns(TOP_MIDDLE_PIXELS)


def _corners_same(codes: np.ndarray) -> np.ndarray:
    corners = np.stack([codes[:, row, col] for row, col in CORNER_PIXELS], axis=1)
    return (corners == corners[:, :1]).all(axis=1)


def _top_middle_distinct(codes: np.ndarray) -> np.ndarray:
    a, b, c = (codes[:, row, col] for row, col in TOP_MIDDLE_PIXELS)
    return (a != b) & (b != c) & (a != c)


def _sample_both_rules(rng: np.random.Generator, count: int) -> np.ndarray:
    codes = rng.integers(0, len(COLORS), size=(count, SIDE, SIDE))
    corner_color = rng.integers(0, len(COLORS), size=count)
    for row, col in CORNER_PIXELS:
        codes[:, row, col] = corner_color
    top = rng.permuted(np.tile(np.arange(len(COLORS)), (count, 1)), axis=1)[:, : len(TOP_MIDDLE_PIXELS)]
    for position, (row, col) in enumerate(TOP_MIDDLE_PIXELS):
        codes[:, row, col] = top[:, position]
    return codes


def _sample_neither_rule(rng: np.random.Generator, count: int) -> np.ndarray:
    accepted: list[np.ndarray] = []
    remaining = count
    while remaining > 0:
        batch = rng.integers(0, len(COLORS), size=(2 * remaining + 8, SIDE, SIDE))
        keep = batch[~_corners_same(batch) & ~_top_middle_distinct(batch)][:remaining]
        accepted.append(keep)
        remaining -= keep.shape[0]
    return np.concatenate(accepted) if accepted else np.empty((0, SIDE, SIDE), dtype=np.int64)


def gen_toy_color(n: int, seed: int) -> LabeledDataset:
    """
    Generates n balanced Toy Color images (class 0 gets the extra one when n is odd).

    Raises:
        DatasetError: If n < 2.
    """
    if n < 2:  # noqa: PLR2004
        msg = f"Toy Color needs at least 2 examples, got {n}"
        raise DatasetError(msg)
    rng = np.random.default_rng(seed)
    positives = n - n // 2
    codes = np.concatenate([_sample_both_rules(rng, positives), _sample_neither_rule(rng, n // 2)])
    labels = np.concatenate([np.zeros(positives, dtype=np.int64), np.ones(n // 2, dtype=np.int64)])
    order = rng.permutation(n)
    X = COLORS[codes[order]].reshape(n, -1)
    logger.debug(f"Generated {n} Toy Color images with seed {seed}")
    return LabeledDataset(
        name="toy-color",
        X=X,
        y=one_hot(labels[order], 2),
        kind=TOY_COLOR_KIND,
        class_names=["both-rules", "neither-rule"],
    )


def toy_color_rules(X: npt.ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Evaluates (corners identical, top-middle pairwise distinct) on flattened RGB images."""
    images = np.asarray(X, dtype=np.float64).reshape(-1, SIDE, SIDE, CHANNELS)
    corners = np.stack([images[:, row, col] for row, col in CORNER_PIXELS], axis=1)
    corners_same = (corners == corners[:, :1]).all(axis=(1, 2))
    a, b, c = (images[:, row, col] for row, col in TOP_MIDDLE_PIXELS)
    differs = [(p != q).any(axis=1) for p, q in ((a, b), (b, c), (a, c))]
    return corners_same, differs[0] & differs[1] & differs[2]


def toy_color_masks(which: MaskName | str, n: int) -> np.ndarray:
    """
    Annotation matrices over the 75 Toy Color columns.

    corners/anti-rule1 penalize the 12 corner columns; top-middle/anti-rule2 the 9
    top-middle columns; pro-rule1 and pro-rule2 are their complements.
    """
    row = np.zeros(SIDE * SIDE * CHANNELS)
    if which in ("corners", "anti-rule1", "pro-rule1"):
        row[CORNER_COLUMNS] = 1.0
    elif which in ("top-middle", "anti-rule2", "pro-rule2"):
        row[TOP_MIDDLE_COLUMNS] = 1.0
    else:
        msg = f"Unknown Toy Color mask '{which}', expected one of {', '.join(MASK_NAMES)}"
        raise DatasetError(msg)
    if which.startswith("pro-"):
        row = 1.0 - row
    return np.tile(row, (n, 1))


def rule_shares(weights: npt.ArrayLike) -> tuple[float, float]:
    """
    Fractions of total mass (mask bits or |gradient|) falling on corner and top-middle columns.

    Returns (0.0, 0.0) when there is no mass at all.
    """
    mass = np.abs(np.asarray(weights, dtype=np.float64))
    total = mass.sum()
    if total == 0:
        return 0.0, 0.0
    return float(mass[..., CORNER_COLUMNS].sum() / total), float(mass[..., TOP_MIDDLE_COLUMNS].sum() / total)

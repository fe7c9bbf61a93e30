"""
MNIST from IDX files, and the Decoy MNIST transform.

IDX layout (big-endian): a 4-byte magic number, one 4-byte count per dimension,
then unsigned bytes. Images use magic 2051 (0x00000803), labels 2049 (0x00000801).
"""

import gzip
import struct
from pathlib import Path
from typing import Literal

import numpy as np

from right_reasons.datasets.schema import GridKind, LabeledDataset, one_hot
from right_reasons.errors.datasets import DatasetShapeError, IdxCountMismatchError, IdxFormatError, IdxTruncatedError
from right_reasons.shared.logging import BASE_LOGGER

logger = BASE_LOGGER.getChild("mnist")

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049
NUM_CLASSES = 10

SWATCH_SIZE = 4
TRAIN_SHADES = np.array([(255 - 25 * digit) / 255 for digit in range(NUM_CLASSES)])

Phase = Literal["train", "test"]

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _read_bytes(path: Path) -> bytes:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def read_idx(path: Path, magic: int, dims: int) -> np.ndarray:
    """
    Parses one IDX file into a uint8 array of shape (count, *dims).

    Raises:
        IdxFormatError: If the magic number does not match.
        IdxTruncatedError: If the file ends before the header or the data it declares.
    """
    data = _read_bytes(path)
    header_size = 4 * (1 + dims)
    if len(data) < header_size:
        raise IdxTruncatedError(str(path), len(data), header_size)
    found, *shape = struct.unpack(f">{1 + dims}I", data[:header_size])
    if found != magic:
        msg = f"IDX file {path} has magic number {found}, expected {magic}"
        raise IdxFormatError(msg)
    expected = header_size + int(np.prod(shape))
    if len(data) < expected:
        raise IdxTruncatedError(str(path), len(data), expected)
    return np.frombuffer(data, dtype=np.uint8, count=expected - header_size, offset=header_size).reshape(shape)


def load_mnist(images_path: Path, labels_path: Path, limit: int | None = None) -> LabeledDataset:
    """
    Loads an IDX image/label pair with pixels scaled to [0, 1] and one-hot labels.

    Args:
        images_path: IDX3 image file, optionally gzipped.
        labels_path: IDX1 label file, optionally gzipped.
        limit: Keep only the first `limit` examples.

    Raises:
        IdxCountMismatchError: If the two files hold different numbers of items.
    """
    images = read_idx(images_path, IMAGES_MAGIC, 3)
    labels = read_idx(labels_path, LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        msg = f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels"
        raise IdxCountMismatchError(msg)
    if labels.size and labels.max() >= NUM_CLASSES:
        msg = f"{labels_path} contains label {labels.max()}, expected digits 0-9"
        raise IdxFormatError(msg)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    count, height, width = images.shape
    logger.info(f"Loaded {count} {height}x{width} images from {images_path}")
    return LabeledDataset(
        name="mnist",
        X=images.reshape(count, height * width) / 255.0,
        y=one_hot(labels, NUM_CLASSES),
        kind=GridKind(height=height, width=width),
        class_names=[str(digit) for digit in range(NUM_CLASSES)],
    )


def mnist_paths(directory: Path, phase: Phase) -> tuple[Path, Path]:
    """Locates the standard file pair for a phase, preferring uncompressed files."""
    located = []
    for name in MNIST_FILES[phase]:
        plain, zipped = directory / name, directory / f"{name}.gz"
        located.append(plain if plain.exists() or not zipped.exists() else zipped)
    return located[0], located[1]


def corner_blocks(height: int, width: int) -> list[tuple[slice, slice]]:
    last_rows, last_cols = slice(height - SWATCH_SIZE, height), slice(width - SWATCH_SIZE, width)
    first = slice(0, SWATCH_SIZE)
    return [(first, first), (first, last_cols), (last_rows, first), (last_rows, last_cols)]


def swatch_mask(n: int, height: int = 28, width: int = 28) -> np.ndarray:
    """Annotation matrix marking all four corner blocks (64 pixels) in every row."""
    pixels = np.zeros((height, width))
    for rows, cols in corner_blocks(height, width):
        pixels[rows, cols] = 1.0
    return np.tile(pixels.reshape(-1), (n, 1))


def decoyify(mnist: LabeledDataset, seed: int, phase: Phase) -> tuple[LabeledDataset, np.ndarray]:
    """
    Paints a 4x4 gray swatch into one randomly chosen corner of every image.

    In the train phase the shade is (255 - 25 * digit) / 255; in the test phase it is
    drawn uniformly from those ten shades. Corner choice depends only on the seed and
    the example index, so both phases place swatches identically.

    Returns:
        The decoy dataset and the annotation matrix covering all four corners.

    Raises:
        DatasetShapeError: If the dataset is not a single-channel 28x28 grid.
    """
    kind = mnist.kind
    if not isinstance(kind, GridKind) or (kind.height, kind.width, kind.channels) != (28, 28, 1):
        msg = f"Decoy MNIST needs 28x28 single-channel images, got {kind}"
        raise DatasetShapeError(msg)

    count = mnist.n_examples
    placement = np.random.default_rng(seed).integers(0, 4, size=count)
    if phase == "train":
        shades = TRAIN_SHADES[mnist.labels]
    else:
        shades = TRAIN_SHADES[np.random.default_rng([seed, 1]).integers(0, NUM_CLASSES, size=count)]

    images = mnist.X.reshape(count, kind.height, kind.width).copy()
    for corner, (rows, cols) in enumerate(corner_blocks(kind.height, kind.width)):
        chosen = placement == corner
        images[chosen, rows, cols] = shades[chosen, None, None]

    logger.info(f"Added {phase} decoy swatches to {count} images with seed {seed}")
    decoy = LabeledDataset(
        name="decoy-mnist", X=images.reshape(count, -1), y=mnist.y, kind=kind, class_names=mnist.class_names, split=phase
    )
    return decoy, swatch_mask(count, kind.height, kind.width)

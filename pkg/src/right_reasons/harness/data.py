"""Resolving a DatasetSpec into train/test sets and annotation matrices."""

from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from right_reasons.config.config import AnnotationName, DatasetSpec
from right_reasons.datasets.iris_cancer import build_iris_cancer
from right_reasons.datasets.mnist import decoyify, load_mnist, mnist_paths
from right_reasons.datasets.newsgroups import load_20ng
from right_reasons.datasets.schema import LabeledDataset
from right_reasons.datasets.splits import split
from right_reasons.datasets.toy2d import gen_2d_toy
from right_reasons.datasets.toy_color import gen_toy_color, toy_color_masks
from right_reasons.errors.harness import ConfigError
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.training.trainer import annotate_rows

logger = BASE_LOGGER.getChild("data")

TOY_COLOR_MASKS = ("corners", "top-middle", "pro-rule1", "pro-rule2", "anti-rule1", "anti-rule2")


class ExperimentData(BaseModel):
    """Train and test sets plus the dataset's own annotation of its confound, if it has one."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    train: LabeledDataset
    test: LabeledDataset
    train_mask: np.ndarray | None = Field(None, description="Full annotation over the training rows.")
    test_mask: np.ndarray | None = Field(None, description="The same annotation over the test rows.")


def _require_path(path: Path | None, flag: str, dataset: str) -> Path:
    if path is None:
        msg = f"Dataset '{dataset}' needs {flag}"
        raise ConfigError(msg)
    if not path.exists():
        msg = f"Dataset path {path} given by {flag} does not exist"
        raise ConfigError(msg)
    return path


def _split_masked(dataset: LabeledDataset, mask: np.ndarray | None, spec: DatasetSpec) -> ExperimentData:
    train, test = split(dataset.with_annotations(mask), spec.train_fraction, spec.seed)
    return ExperimentData(
        train=train.with_annotations(None),
        test=test.with_annotations(None),
        train_mask=train.A if mask is not None else None,
        test_mask=test.A if mask is not None else None,
    )


def _load_mnist_phase(directory: Path, phase: str, limit: int | None) -> LabeledDataset:
    images, labels = mnist_paths(directory, phase)
    for path in (images, labels):
        if not path.exists():
            msg = f"MNIST file {path} does not exist"
            raise ConfigError(msg)
    return load_mnist(images, labels, limit=limit)


def load_experiment_data(spec: DatasetSpec) -> ExperimentData:
    """
    Generates or loads the dataset a DatasetSpec names.

    Raises:
        ConfigError: If a required source path is unset or missing.
    """
    name = spec.name
    logger.info(f"Preparing dataset '{name}'")
    if name == "toy-color":
        train, test = gen_toy_color(spec.n, spec.seed), gen_toy_color(spec.test_n, spec.resolved_test_seed)
        return ExperimentData(
            train=train, test=test, train_mask=toy_color_masks("corners", spec.n), test_mask=toy_color_masks("corners", spec.test_n)
        )
    if name in ("mnist", "decoy-mnist"):
        directory = _require_path(spec.mnist_dir, "--mnist-dir", name)
        train = _load_mnist_phase(directory, "train", spec.subsample)
        test = _load_mnist_phase(directory, "test", None)
        if name == "mnist":
            return ExperimentData(train=train, test=test)
        decoy_train, train_mask = decoyify(train, spec.seed, "train")
        decoy_test, test_mask = decoyify(test, spec.resolved_test_seed, "test")
        return ExperimentData(train=decoy_train, test=decoy_test, train_mask=train_mask, test_mask=test_mask)
    if name == "iris-cancer":
        iris = _require_path(spec.iris_path, "--iris-path", name) if spec.iris_path else None
        cancer = _require_path(spec.cancer_path, "--cancer-path", name) if spec.cancer_path else None
        dataset, mask = build_iris_cancer(iris, cancer)
        return _split_masked(dataset, mask, spec)
    if name == "20ng":
        corpus = _require_path(spec.corpus_dir, "--corpus-dir", name)
        return _split_masked(load_20ng(corpus, strip_headers=spec.strip_headers), None, spec)

    kind = name.removeprefix("toy-2d-")
    return ExperimentData(train=gen_2d_toy(kind, spec.n, spec.seed), test=gen_2d_toy(kind, spec.test_n, spec.resolved_test_seed))


def annotations_for(data: ExperimentData, annotation: AnnotationName, annotated_rows: int | None = None, seed: int = 0) -> np.ndarray:
    """
    The training annotation matrix for a named variant.

    'full' is the dataset's own confound annotation; the Toy Color names select rule
    masks. With `annotated_rows`, only that many seeded rows keep their annotation.

    Raises:
        ConfigError: If the variant does not exist for the dataset.
    """
    train = data.train
    if annotation == "none":
        return np.zeros_like(train.X)
    if annotation == "full":
        if data.train_mask is None:
            msg = f"Dataset '{train.name}' has no confound annotation for 'full'"
            raise ConfigError(msg)
        mask = data.train_mask
    elif train.name == "toy-color":
        mask = toy_color_masks(annotation, train.n_examples)
    else:
        msg = f"Annotation '{annotation}' only applies to toy-color, not '{train.name}'"
        raise ConfigError(msg)
    return annotate_rows(mask, annotated_rows, seed) if annotated_rows is not None else mask

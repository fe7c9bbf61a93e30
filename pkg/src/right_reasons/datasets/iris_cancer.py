"""
Iris-Cancer: Iris features concatenated onto Breast Cancer Wisconsin rows.

Iris versicolor rows are paired with malignant tumors and virginica with benign ones,
so the four Iris columns are a confound that predicts the label perfectly well
without saying anything about the tumor.
"""

import csv
from pathlib import Path

import numpy as np
from sklearn.datasets import load_breast_cancer, load_iris

from right_reasons.datasets.schema import LabeledDataset, TabularKind, one_hot
from right_reasons.errors.datasets import SourceFormatError
from right_reasons.shared.logging import BASE_LOGGER

logger = BASE_LOGGER.getChild("iris_cancer")

IRIS_SPECIES = ("Iris-setosa", "Iris-versicolor", "Iris-virginica")
IRIS_FEATURES = ["sepal length", "sepal width", "petal length", "petal width"]
WDBC_DIAGNOSES = ("M", "B")
WDBC_FEATURE_COUNT = 30
ROWS_PER_CLASS = 50
IRIS_COLUMNS = np.arange(len(IRIS_FEATURES))


def _float_row(values: list[str], path: Path, line: int) -> list[float]:
    try:
        return [float(value) for value in values]
    except ValueError as e:
        msg = f"{path}:{line}: non-numeric feature value in {values}"
        raise SourceFormatError(msg) from e


def parse_iris_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """
    Reads the UCI iris.data layout: four measurements then the species name.

    Raises:
        SourceFormatError: On a row without 5 fields or with an unknown species.
    """
    features, labels = [], []
    with path.open(newline="") as f:
        for line, row in enumerate(csv.reader(f), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(IRIS_FEATURES) + 1:
                msg = f"{path}:{line}: expected 5 fields, got {len(row)}"
                raise SourceFormatError(msg)
            species = row[-1].strip()
            if species not in IRIS_SPECIES:
                msg = f"{path}:{line}: unknown species '{species}'"
                raise SourceFormatError(msg)
            features.append(_float_row(row[:-1], path, line))
            labels.append(IRIS_SPECIES.index(species))
    return np.array(features).reshape(-1, len(IRIS_FEATURES)), np.array(labels, dtype=np.int64)


def parse_wdbc_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """
    Reads the UCI wdbc.data layout: id, diagnosis (M/B), 30 features. M maps to 0, B to 1.

    Raises:
        SourceFormatError: On a row without 32 fields or with an unknown diagnosis.
    """
    features, labels = [], []
    with path.open(newline="") as f:
        for line, row in enumerate(csv.reader(f), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != WDBC_FEATURE_COUNT + 2:
                msg = f"{path}:{line}: expected {WDBC_FEATURE_COUNT + 2} fields, got {len(row)}"
                raise SourceFormatError(msg)
            diagnosis = row[1].strip()
            if diagnosis not in WDBC_DIAGNOSES:
                msg = f"{path}:{line}: unknown diagnosis '{diagnosis}'"
                raise SourceFormatError(msg)
            features.append(_float_row(row[2:], path, line))
            labels.append(WDBC_DIAGNOSES.index(diagnosis))
    return np.array(features).reshape(-1, WDBC_FEATURE_COUNT), np.array(labels, dtype=np.int64)


def _first_rows(features: np.ndarray, labels: np.ndarray, label: int, source: str) -> np.ndarray:
    rows = features[labels == label][:ROWS_PER_CLASS]
    if rows.shape[0] < ROWS_PER_CLASS:
        msg = f"{source} has only {rows.shape[0]} rows of class {label}, need {ROWS_PER_CLASS}"
        raise SourceFormatError(msg)
    return rows


def standardize(X: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per column; constant columns are only centered."""
    scale = X.std(axis=0)
    return (X - X.mean(axis=0)) / np.where(scale > 0, scale, 1.0)


def build_iris_cancer(iris_path: Path | None = None, cancer_path: Path | None = None) -> tuple[LabeledDataset, np.ndarray]:
    """
    Builds the 100 x 34 confounded dataset.

    Rows 0-49 are Iris versicolor next to the first 50 malignant tumors (class 0); rows
    50-99 are Iris virginica next to the first 50 benign tumors (class 1). Sources
    default to the copies bundled with scikit-learn.

    Returns:
        The dataset and the annotation matrix marking the four Iris columns.
    """
    if iris_path is not None:
        iris_X, iris_y = parse_iris_csv(iris_path)
    else:
        iris = load_iris()
        iris_X, iris_y = iris.data, iris.target
    if cancer_path is not None:
        cancer_X, cancer_y = parse_wdbc_csv(cancer_path)
        cancer_names = [f"wdbc {index}" for index in range(WDBC_FEATURE_COUNT)]
    else:
        cancer = load_breast_cancer()
        cancer_X, cancer_y = cancer.data, cancer.target
        cancer_names = [str(name) for name in cancer.feature_names]

    iris_source = str(iris_path or "bundled iris")
    cancer_source = str(cancer_path or "bundled breast cancer")
    X = np.vstack(
        [
            np.hstack([_first_rows(iris_X, iris_y, 1, iris_source), _first_rows(cancer_X, cancer_y, 0, cancer_source)]),
            np.hstack([_first_rows(iris_X, iris_y, 2, iris_source), _first_rows(cancer_X, cancer_y, 1, cancer_source)]),
        ]
    )
    labels = np.repeat([0, 1], ROWS_PER_CLASS)
    dataset = LabeledDataset(
        name="iris-cancer",
        X=standardize(X),
        y=one_hot(labels, 2),
        kind=TabularKind(feature_names=[f"iris {name}" for name in IRIS_FEATURES] + cancer_names),
        class_names=["versicolor+malignant", "virginica+benign"],
    )
    mask = np.zeros_like(dataset.X)
    mask[:, IRIS_COLUMNS] = 1.0
    logger.info(f"Built Iris-Cancer from {iris_source} and {cancer_source}: {dataset.X.shape}")
    return dataset, mask

import numpy as np

from right_reasons.datasets.schema import LabeledDataset
from right_reasons.errors.datasets import SplitError


def stratified_counts(class_sizes: np.ndarray, fraction: float) -> np.ndarray:
    """
    Training rows per class: floor of each class's share, with the rows left over
    from round(fraction * N) handed to the largest remainders (lowest class first).
    """
    total = int(np.floor(fraction * class_sizes.sum() + 0.5))
    quotas = fraction * class_sizes
    counts = np.floor(quotas).astype(np.int64)
    leftover = total - int(counts.sum())
    order = sorted(range(class_sizes.size), key=lambda index: (-(quotas[index] - counts[index]), index))
    for index in order[:leftover]:
        counts[index] += 1
    return counts


def split(dataset: LabeledDataset, train_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """
    Seeded stratified train/test partition.

    Raises:
        SplitError: If the fraction is outside (0, 1) or a class ends up missing from either side.
    """
    if not 0 < train_fraction < 1:
        msg = f"Train fraction must lie in (0, 1), got {train_fraction}"
        raise SplitError(msg)

    labels = dataset.labels
    rng = np.random.default_rng(seed)
    class_sizes = np.bincount(labels, minlength=dataset.n_classes)
    train_rows, test_rows = [], []
    for label, count in enumerate(stratified_counts(class_sizes, train_fraction)):
        if class_sizes[label] == 0:
            continue
        if count == 0 or count == class_sizes[label]:
            side = "training" if count == 0 else "test"
            msg = f"Class {label} ({class_sizes[label]} rows) gets no {side} examples at fraction {train_fraction}"
            raise SplitError(msg)
        members = rng.permutation(np.flatnonzero(labels == label))
        train_rows.append(members[:count])
        test_rows.append(members[count:])

    train = rng.permutation(np.concatenate(train_rows))
    test = rng.permutation(np.concatenate(test_rows))
    return dataset.subset(train, split="train"), dataset.subset(test, split="test")

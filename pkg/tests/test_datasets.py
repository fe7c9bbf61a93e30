import gzip
import struct

import numpy as np
import pytest

from right_reasons.datasets.iris_cancer import build_iris_cancer, parse_iris_csv, parse_wdbc_csv
from right_reasons.datasets.mnist import TRAIN_SHADES, decoyify, load_mnist, mnist_paths, read_idx, swatch_mask
from right_reasons.datasets.newsgroups import load_20ng, strip_post, top_terms_by_document_frequency
from right_reasons.datasets.schema import GridKind, LabeledDataset, TabularKind, one_hot
from right_reasons.datasets.splits import split, stratified_counts
from right_reasons.datasets.storage import load_dataset, save_dataset
from right_reasons.datasets.toy2d import gen_2d_toy
from right_reasons.datasets.toy_color import gen_toy_color, rule_shares, toy_color_masks, toy_color_rules
from right_reasons.errors.datasets import (
    DatasetError,
    DatasetShapeError,
    DatasetStorageError,
    IdxCountMismatchError,
    IdxFormatError,
    IdxTruncatedError,
    NewsgroupsCorpusError,
    SourceFormatError,
    SplitError,
)

PALETTE = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0)]


def decode_colors(X):
    """Maps each flattened RGB pixel back to its palette index; fails on off-palette pixels."""
    pixels = X.reshape(-1, 5, 5, 3)
    codes = np.full(pixels.shape[:3], -1)
    for code, color in enumerate(PALETTE):
        codes[(pixels == color).all(axis=3)] = code
    assert (codes >= 0).all()
    return codes


def write_idx(path, magic, array, compress=False):
    payload = struct.pack(f">{1 + array.ndim}I", magic, *array.shape) + array.astype(np.uint8).tobytes()
    opener = gzip.open if compress else open
    with opener(path, "wb") as f:
        f.write(payload)


def test_dataset_rejects_bad_shapes():
    with pytest.raises(DatasetShapeError):
        LabeledDataset(name="bad", X=np.ones((3, 2)), y=one_hot([0, 1], 2), kind=TabularKind(feature_names=["a", "b"]))
    with pytest.raises(DatasetShapeError):
        LabeledDataset(name="bad", X=np.ones((2, 2)), y=one_hot([0, 1], 2), A=np.full((2, 2), 0.5), kind=TabularKind(feature_names=["a", "b"]))
    with pytest.raises(DatasetShapeError):
        LabeledDataset(name="bad", X=np.ones((2, 3)), y=one_hot([0, 1], 2), kind=TabularKind(feature_names=["a", "b"]))


@pytest.mark.parametrize("n", [2, 7, 200])
def test_toy_color_postconditions(n):
    data = gen_toy_color(n, seed=5)
    codes = decode_colors(data.X)
    corners = np.stack([codes[:, 0, 0], codes[:, 0, 4], codes[:, 4, 0], codes[:, 4, 4]], axis=1)
    corners_same = (corners == corners[:, :1]).all(axis=1)
    top = codes[:, 0, 1:4]
    distinct = (top[:, 0] != top[:, 1]) & (top[:, 1] != top[:, 2]) & (top[:, 0] != top[:, 2])

    labels = data.labels
    assert np.all(corners_same[labels == 0]) and np.all(distinct[labels == 0])
    assert not np.any(corners_same[labels == 1]) and not np.any(distinct[labels == 1])
    assert np.count_nonzero(labels == 0) == n - n // 2
    assert data.A.sum() == 0


def test_toy_color_rules_agree_with_labels(toy_color_small):
    corners_same, distinct = toy_color_rules(toy_color_small.X)
    np.testing.assert_array_equal(corners_same, toy_color_small.labels == 0)
    np.testing.assert_array_equal(distinct, toy_color_small.labels == 0)


def test_toy_color_is_seeded():
    assert gen_toy_color(50, seed=1).fingerprint() == gen_toy_color(50, seed=1).fingerprint()
    assert gen_toy_color(50, seed=1).fingerprint() != gen_toy_color(50, seed=2).fingerprint()
    with pytest.raises(DatasetError):
        gen_toy_color(1, seed=0)


def test_toy_color_masks():
    corners, top = toy_color_masks("corners", 3), toy_color_masks("anti-rule2", 3)
    assert corners.shape == (3, 75)
    assert corners[0].sum() == 12 and top[0].sum() == 9
    assert corners[0, [0, 1, 2, 12, 13, 14, 60, 61, 62, 72, 73, 74]].all()
    assert top[0, 3:12].all()
    np.testing.assert_array_equal(toy_color_masks("pro-rule1", 3), 1 - corners)
    np.testing.assert_array_equal(toy_color_masks("anti-rule1", 3), corners)
    with pytest.raises(DatasetError):
        toy_color_masks("edges", 3)


def test_rule_shares():
    weights = toy_color_masks("corners", 1) + 2 * toy_color_masks("top-middle", 1)
    corner_share, top_share = rule_shares(weights)
    assert corner_share == pytest.approx(12 / 30)
    assert top_share == pytest.approx(18 / 30)
    assert rule_shares(np.zeros((2, 75))) == (0.0, 0.0)


def test_read_idx_and_load_mnist(tmp_path, rng):
    images = rng.integers(0, 256, size=(6, 28, 28))
    labels = np.array([0, 1, 2, 3, 4, 9])
    write_idx(tmp_path / "train-images-idx3-ubyte.gz", 2051, images, compress=True)
    write_idx(tmp_path / "train-labels-idx1-ubyte", 2049, labels)

    images_path, labels_path = mnist_paths(tmp_path, "train")
    assert images_path.name.endswith(".gz")
    np.testing.assert_array_equal(read_idx(images_path, 2051, 3), images)

    data = load_mnist(images_path, labels_path, limit=4)
    assert data.n_examples == 4
    assert data.kind == GridKind(height=28, width=28)
    np.testing.assert_allclose(data.X[0], images[0].ravel() / 255.0)
    np.testing.assert_array_equal(data.labels, labels[:4])


def test_idx_errors(tmp_path, rng):
    good = tmp_path / "labels"
    write_idx(good, 2049, np.array([1, 2, 3]))
    with pytest.raises(IdxFormatError):
        read_idx(good, 2051, 1)

    truncated = tmp_path / "truncated"
    truncated.write_bytes(good.read_bytes()[:-1])
    with pytest.raises(IdxTruncatedError) as excinfo:
        read_idx(truncated, 2049, 1)
    assert excinfo.value.offset == 10

    images = tmp_path / "images"
    write_idx(images, 2051, rng.integers(0, 256, size=(2, 28, 28)))
    with pytest.raises(IdxCountMismatchError):
        load_mnist(images, good)


def blank_mnist(labels):
    labels = np.asarray(labels)
    return LabeledDataset(name="mnist", X=np.zeros((labels.size, 784)), y=one_hot(labels, 10), kind=GridKind(height=28, width=28))


def corner_pixels(X):
    images = X.reshape(-1, 28, 28)
    return np.stack([images[:, :4, :4], images[:, :4, -4:], images[:, -4:, :4], images[:, -4:, -4:]], axis=1).reshape(-1, 4, 16)


def test_decoy_swatches():
    labels = np.arange(40) % 10
    train, mask = decoyify(blank_mnist(labels), seed=3, phase="train")
    corners = corner_pixels(train.X)
    painted = (corners > 0).all(axis=2)
    assert (painted.sum(axis=1) == 1).all()
    np.testing.assert_allclose(corners[painted][:, 0], TRAIN_SHADES[labels])
    assert np.count_nonzero(train.X) == 40 * 16
    np.testing.assert_array_equal(mask, swatch_mask(40))
    assert mask[0].sum() == 64

    test, _ = decoyify(blank_mnist(labels), seed=3, phase="test")
    test_painted = (corner_pixels(test.X) > 0).all(axis=2)
    np.testing.assert_array_equal(test_painted, painted)
    assert np.isin(corner_pixels(test.X)[test_painted][:, 0], TRAIN_SHADES).all()
    assert test.split == "test"


def test_decoy_needs_mnist_layout(small_dataset):
    with pytest.raises(DatasetShapeError):
        decoyify(small_dataset, seed=0, phase="train")


def test_iris_cancer_from_bundled_sources():
    dataset, mask = build_iris_cancer()
    assert dataset.X.shape == (100, 34)
    np.testing.assert_array_equal(dataset.labels, np.repeat([0, 1], 50))
    assert mask[:, :4].all() and not mask[:, 4:].any()
    np.testing.assert_allclose(dataset.X.mean(axis=0), 0.0, atol=1e-12)


def test_parse_uci_files(tmp_path):
    iris = tmp_path / "iris.data"
    iris.write_text("5.1,3.5,1.4,0.2,Iris-setosa\n7.0,3.2,4.7,1.4,Iris-versicolor\n\n")
    features, labels = parse_iris_csv(iris)
    assert features.shape == (2, 4)
    np.testing.assert_array_equal(labels, [0, 1])

    wdbc = tmp_path / "wdbc.data"
    wdbc.write_text("842302,M," + ",".join(["1.5"] * 30) + "\n")
    features, labels = parse_wdbc_csv(wdbc)
    assert features.shape == (1, 30) and labels.tolist() == [0]

    iris.write_text("5.1,3.5,oops,0.2,Iris-setosa\n")
    with pytest.raises(SourceFormatError, match=":1:"):
        parse_iris_csv(iris)
    iris.write_text("5.1,3.5,1.4,0.2,Iris-unknown\n")
    with pytest.raises(SourceFormatError):
        parse_iris_csv(iris)


def test_strip_post():
    post = "From: someone\nSubject: faith\n\nI agree.\n> quoted reply\nIn article <1@x> bob writes:\nFinal line."
    assert strip_post(post) == "I agree.\nFinal line."


def test_top_terms_break_ties_alphabetically():
    counts = np.array([[1, 1, 0, 1], [0, 1, 1, 1]])
    keep = top_terms_by_document_frequency(counts, ["d", "c", "b", "a"], 2)
    np.testing.assert_array_equal(keep, [1, 3])


def test_load_20ng(tmp_path):
    for group, posts in {
        "alt.atheism": ["Header: x\n\nno god here", "Header: y\n\nreason and evidence"],
        "soc.religion.christian": ["Header: z\n\nchurch and god", "Header: w\n\nprayer in church"],
    }.items():
        directory = tmp_path / group
        directory.mkdir()
        for index, text in enumerate(posts):
            (directory / str(index)).write_text(text)

    data = load_20ng(tmp_path, vocabulary_size=3)
    assert data.X.shape == (4, 3)
    assert "church" in data.kind.vocabulary and "god" in data.kind.vocabulary
    assert "header" not in data.kind.vocabulary
    norms = np.linalg.norm(data.X, axis=1)
    np.testing.assert_allclose(norms[norms > 0], 1.0)

    with pytest.raises(NewsgroupsCorpusError):
        load_20ng(tmp_path, classes=("alt.atheism", "comp.graphics"))


@pytest.mark.parametrize(("kind", "classes"), [("two-class", 2), ("three-class", 3)])
def test_2d_toy(kind, classes):
    data = gen_2d_toy(kind, 101, seed=0)
    counts = np.bincount(data.labels, minlength=classes)
    assert counts.max() - counts.min() <= 1
    assert data.n_classes == classes
    with pytest.raises(DatasetError):
        gen_2d_toy(kind, 9, seed=0)


def test_stratified_counts():
    np.testing.assert_array_equal(stratified_counts(np.array([50, 50]), 2 / 3), [34, 33])
    assert stratified_counts(np.array([3, 5, 9]), 0.5).sum() == 9


def test_split_keeps_every_class(toy_color_small):
    train, test = split(toy_color_small, 2 / 3, seed=0)
    assert train.n_examples + test.n_examples == toy_color_small.n_examples
    assert set(train.labels) == set(test.labels) == {0, 1}
    assert train.split == "train" and test.split == "test"
    again, _ = split(toy_color_small, 2 / 3, seed=0)
    assert again.fingerprint() == train.fingerprint()


def test_split_errors(small_dataset):
    with pytest.raises(SplitError):
        split(small_dataset, 1.0, seed=0)
    tiny = LabeledDataset(name="tiny", X=np.ones((3, 1)), y=one_hot([0, 0, 1], 2), kind=TabularKind(feature_names=["a"]))
    with pytest.raises(SplitError):
        split(tiny, 0.5, seed=0)


def test_storage_round_trip(tmp_path, small_dataset):
    path = tmp_path / "data.csv"
    save_dataset(small_dataset, path)
    loaded = load_dataset(path)
    assert loaded.X.tobytes() == small_dataset.X.tobytes()
    assert loaded.fingerprint() == small_dataset.fingerprint()
    assert path.read_text().splitlines()[1].startswith("label,x_0,x_1,x_2,x_3,a_0")


def test_storage_rejects_malformed_files(tmp_path, small_dataset):
    path = tmp_path / "data.csv"
    path.write_text("label,x_0\n1,2\n")
    with pytest.raises(DatasetStorageError):
        load_dataset(path)
    save_dataset(small_dataset, path)
    path.write_text(path.read_text() + "1,not-a-number\n")
    with pytest.raises(DatasetStorageError):
        load_dataset(path)

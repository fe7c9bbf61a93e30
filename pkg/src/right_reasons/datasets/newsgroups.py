"""
The alt.atheism vs. soc.religion.christian subset of 20 Newsgroups as TF-IDF rows.

Expects one directory per class under the corpus directory, each holding one raw
post per file.
"""

import re
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from sklearn.feature_extraction.text import CountVectorizer, TfidfTransformer

from right_reasons.datasets.schema import LabeledDataset, TextKind, one_hot
from right_reasons.errors.datasets import NewsgroupsCorpusError
from right_reasons.shared.logging import BASE_LOGGER

logger = BASE_LOGGER.getChild("newsgroups")

NEWSGROUPS_CLASSES = ("alt.atheism", "soc.religion.christian")
VOCABULARY_SIZE = 5000
TOKEN_PATTERN = r"[a-z0-9]{2,}"

_QUOTE_LINE = re.compile(r"^\s*(>|\||In article|.* writes:\s*$)")


def strip_post(text: str) -> str:
    """Drops the header block (everything before the first blank line) and quoted lines."""
    _, blank, body = text.partition("\n\n")
    body = body if blank else text
    return "\n".join(line for line in body.splitlines() if not _QUOTE_LINE.match(line))


def _read_class(directory: Path) -> list[str]:
    if not directory.is_dir():
        msg = f"Newsgroups class directory {directory} does not exist"
        raise NewsgroupsCorpusError(msg)
    documents = [path.read_text(encoding="latin-1") for path in sorted(directory.iterdir()) if path.is_file()]
    if not documents:
        msg = f"Newsgroups class directory {directory} holds no documents"
        raise NewsgroupsCorpusError(msg)
    return documents


def top_terms_by_document_frequency(counts: Any, terms: Sequence[str], size: int) -> np.ndarray:
    """Column indices of the `size` terms with the highest document frequency, ties broken alphabetically."""
    document_frequency = np.asarray((counts > 0).sum(axis=0)).ravel()
    order = np.lexsort((np.asarray(terms), -document_frequency))
    return np.sort(order[:size])


def load_20ng(
    corpus_dir: Path,
    classes: Sequence[str] = NEWSGROUPS_CLASSES,
    vocabulary_size: int = VOCABULARY_SIZE,
    strip_headers: bool = True,
) -> LabeledDataset:
    """
    Tokenizes, keeps the most document-frequent terms and emits L2-normalized TF-IDF rows.

    Tokens are lowercase alphanumeric runs of length 2 or more. Inverse document
    frequency is smoothed: log((1 + N) / (1 + df)) + 1.

    Args:
        corpus_dir: Directory with one subdirectory per class.
        classes: Class directory names, in label order.
        vocabulary_size: Number of terms kept (all terms when fewer exist).
        strip_headers: Remove post headers and quoted replies before tokenizing.

    Raises:
        NewsgroupsCorpusError: If a class directory is missing or empty.
    """
    documents: list[str] = []
    labels: list[int] = []
    for label, name in enumerate(classes):
        posts = _read_class(corpus_dir / name)
        documents.extend(strip_post(post) if strip_headers else post for post in posts)
        labels.extend([label] * len(posts))

    vectorizer = CountVectorizer(lowercase=True, token_pattern=TOKEN_PATTERN)
    counts = vectorizer.fit_transform(documents)
    terms = vectorizer.get_feature_names_out()
    keep = top_terms_by_document_frequency(counts, terms, vocabulary_size)
    tfidf = TfidfTransformer(norm="l2", smooth_idf=True).fit_transform(counts[:, keep])

    logger.info(f"Loaded {len(documents)} posts from {corpus_dir} with a {keep.size}-term vocabulary")
    return LabeledDataset(
        name="20ng",
        X=tfidf.toarray(),
        y=one_hot(labels, len(classes)),
        kind=TextKind(vocabulary=[str(term) for term in terms[keep]]),
        class_names=list(classes),
    )

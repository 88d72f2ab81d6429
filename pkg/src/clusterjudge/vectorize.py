"""TF-IDF -> max-abs scaling -> randomized truncated SVD.

The reduced space is what the density clusterer consumes. A precomputed reduction
(e.g. UMAP coordinates produced elsewhere) can be loaded instead with
:func:`load_external_reduction`.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .errors import ArgumentError, EmptyVocabularyError, ValidationError
from .text import ENGLISH_STOPWORDS, tokenize


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    document_frequency: np.ndarray

    def __len__(self) -> int:
        return len(self.terms)

    def index(self, term: str) -> int:
        return self.terms.index(term)


@dataclass(frozen=True)
class ReducedEmbedding:
    matrix: np.ndarray
    reducer_tag: str = "svd"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValidationError("embedding must be a 2-D matrix")
        if m.shape[1] < 2:
            raise ValidationError("reduced dimension must be >= 2")
        if not np.all(np.isfinite(m)):
            raise ValidationError("embedding contains non-finite values")
        object.__setattr__(self, "matrix", m)

    @property
    def r(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]


def fit_tfidf(corpus: Corpus, min_df: int = 2, stopwords=ENGLISH_STOPWORDS):
    """Smoothed TF-IDF with L2-normalised rows.

    ``idf(t) = ln((1 + N) / (1 + df(t))) + 1`` and ``tf`` is the raw count.
    Terms seen in fewer than ``min_df`` documents are dropped.

    Returns
    -------
    (Vocabulary, scipy.sparse.csr_matrix)
        Columns follow the sorted vocabulary; rows follow corpus order.
    """
    if len(corpus) == 0:
        raise ArgumentError("corpus is empty")
    counts = [Counter(tokenize(doc.text, stopwords)) for doc in corpus]
    df = Counter()
    for c in counts:
        df.update(c.keys())
    terms = tuple(sorted(t for t, n in df.items() if n >= min_df))
    if not terms:
        raise EmptyVocabularyError("no tokens survive tokenisation and min_df filtering")
    col = {t: j for j, t in enumerate(terms)}
    n_docs = len(corpus)
    doc_freq = np.array([df[t] for t in terms], dtype=np.int64)
    idf = np.log((1.0 + n_docs) / (1.0 + doc_freq)) + 1.0

    indptr, indices, data = [0], [], []
    for c in counts:
        cols = sorted(col[t] for t in c if t in col)
        row = np.array([c[terms[j]] * idf[j] for j in cols], dtype=float)
        norm = np.sqrt(row @ row) if len(row) else 0.0
        if norm > 0:
            row = row / norm
        indices.extend(cols)
        data.extend(row.tolist())
        indptr.append(len(indices))
    matrix = sp.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr)),
        shape=(n_docs, len(terms)),
    )
    return Vocabulary(terms, doc_freq), matrix


def maxabs_scale(matrix):
    """Divide each column by its maximum absolute value; zero columns are left alone."""
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        raise ArgumentError("matrix is empty")
    if sp.issparse(matrix):
        m = sp.csr_matrix(matrix, dtype=float, copy=True)
        scale = np.asarray(abs(m).max(axis=0).todense()).ravel()
        scale[scale == 0] = 1.0
        return sp.csr_matrix(m @ sp.diags(1.0 / scale))
    m = np.array(matrix, dtype=float)
    scale = np.abs(m).max(axis=0)
    scale[scale == 0] = 1.0
    return m / scale


def randomized_svd(matrix, rank: int, seed: int, n_oversamples: int = 10, n_iter: int = 2):
    """Halko-style randomized SVD with QR-stabilised power iterations.

    Returns ``(U, s, Vt)`` truncated to ``rank`` components. Signs are fixed so the
    largest-magnitude entry of every left singular vector is positive.
    """
    n, m = matrix.shape
    if not 1 <= rank <= min(n, m):
        raise ArgumentError(f"rank {rank} outside [1, {min(n, m)}]")
    a = matrix if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    width = min(rank + n_oversamples, min(n, m))
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((m, width))
    q, _ = np.linalg.qr(a @ omega)
    for _ in range(n_iter):
        q, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ q)
    b = np.asarray((a.T @ q).T)
    u_small, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ u_small
    u, s, vt = u[:, :rank], s[:rank], vt[:rank]
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(rank)])
    signs[signs == 0] = 1.0
    return u * signs, s, vt * signs[:, None]


def default_rank(n_docs: int, n_terms: int, cap: int = 100) -> int:
    return min(cap, n_docs - 1, n_terms - 1)


def truncated_svd(matrix, rank: int, seed: int) -> ReducedEmbedding:
    """Project rows onto the top ``rank`` singular directions (``U * s``)."""
    upper = min(matrix.shape) - 1
    if not 2 <= rank <= upper:
        raise ArgumentError(f"rank must be in [2, {upper}], got {rank}")
    u, s, _ = randomized_svd(matrix, rank, seed)
    return ReducedEmbedding(u * s, "svd")


def vectorize(corpus: Corpus, *, min_df: int = 2, rank: int | None = None, seed: int = 0,
              stopwords=ENGLISH_STOPWORDS):
    """Full default chain. Returns the vocabulary and the reduced embedding."""
    vocab, tfidf = fit_tfidf(corpus, min_df=min_df, stopwords=stopwords)
    scaled = maxabs_scale(tfidf)
    if rank is None:
        rank = default_rank(*scaled.shape)
    return vocab, truncated_svd(scaled, rank, seed)


def load_external_reduction(path, corpus: Corpus) -> ReducedEmbedding:
    """Load ``{"id": ..., "vector": [...]}`` lines and realign them to corpus order."""
    vectors: dict[str, list[float]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            doc_id = str(rec["id"])
            if doc_id in vectors:
                raise ValidationError(f"line {line_no}: duplicate id {doc_id!r}")
            vectors[doc_id] = rec["vector"]
    if len(vectors) != len(corpus):
        raise ValidationError(f"reduction has {len(vectors)} rows, corpus has {len(corpus)}")
    missing = [i for i in corpus.ids if i not in vectors]
    if missing:
        raise ValidationError(f"reduction lacks ids, e.g. {missing[0]!r}")
    dims = {len(v) for v in vectors.values()}
    if len(dims) != 1:
        raise ValidationError("vectors have inconsistent dimensions")
    return ReducedEmbedding(np.array([vectors[i] for i in corpus.ids], dtype=float), "external")

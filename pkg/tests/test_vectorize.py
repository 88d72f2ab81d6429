import json
import math

import numpy as np
import pytest
import scipy.sparse as sp

from clusterjudge.errors import ArgumentError, EmptyVocabularyError, ValidationError
from clusterjudge.text import plain_tokens, tokenize
from clusterjudge.unionfind import UnionFind, threshold_components
from clusterjudge.vectorize import (
    ReducedEmbedding,
    default_rank,
    fit_tfidf,
    load_external_reduction,
    maxabs_scale,
    randomized_svd,
    truncated_svd,
    vectorize,
)

from conftest import corpus_of


def test_tokenize():
    assert tokenize("Loving this #Vegan bowl @bob https://t.co/x") == ["loving", "vegan", "bowl"]
    assert plain_tokens("Loving this #Vegan bowl") == ["loving", "bowl"]
    assert tokenize("a b cc") == ["cc"]


def test_tfidf_hand_example():
    vocab, m = fit_tfidf(corpus_of(["alpha beta", "alpha gamma"]), min_df=1)
    assert vocab.terms == ("alpha", "beta", "gamma")
    idf_rare = math.log(3 / 2) + 1  # df=1 of N=2; the shared term has idf 1
    norm = math.sqrt(1 + idf_rare ** 2)
    a, b = 1 / norm, idf_rare / norm
    assert a == pytest.approx(0.579739, abs=1e-6) and b == pytest.approx(0.814803, abs=1e-6)
    np.testing.assert_allclose(m.toarray(), [[a, b, 0.0], [a, 0.0, b]], atol=1e-12)


def test_tfidf_single_document():
    vocab, m = fit_tfidf(corpus_of(["kale kale kale"]), min_df=1)
    assert vocab.terms == ("kale",)
    np.testing.assert_allclose(m.toarray(), [[1.0]])


def test_tfidf_min_df():
    vocab, m = fit_tfidf(corpus_of(["alpha beta", "alpha gamma"]), min_df=2)
    assert vocab.terms == ("alpha",)
    assert list(vocab.document_frequency) == [2]
    np.testing.assert_allclose(m.toarray(), [[1.0], [1.0]])


def test_tfidf_errors():
    with pytest.raises(EmptyVocabularyError):
        fit_tfidf(corpus_of(["the and", "of it"]), min_df=1)
    with pytest.raises(EmptyVocabularyError):
        fit_tfidf(corpus_of(["alpha", "beta"]), min_df=2)


def test_tfidf_rows_are_unit_or_zero():
    _, m = fit_tfidf(corpus_of(["alpha beta", "alpha", "gamma delta", "zeta"]), min_df=2)
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    np.testing.assert_allclose(norms, [1.0, 1.0, 0.0, 0.0])


def test_maxabs_examples():
    dense = np.array([[1.0, -4.0, 0.0], [2.0, 2.0, 0.0]])
    expected = [[0.5, -1.0, 0.0], [1.0, 0.5, 0.0]]
    np.testing.assert_allclose(maxabs_scale(dense), expected)
    np.testing.assert_allclose(maxabs_scale(sp.csr_matrix(dense)).toarray(), expected)
    with pytest.raises(ArgumentError):
        maxabs_scale(np.zeros((0, 3)))


def test_randomized_svd_diagonal():
    u, s, vt = randomized_svd(np.diag([2.0, 1.0]), 1, seed=0)
    np.testing.assert_allclose(s, [2.0])
    np.testing.assert_allclose(np.abs(u[:, 0]), [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(vt[0]), [1.0, 0.0], atol=1e-12)


def test_randomized_svd_full_rank_matches_lapack():
    a = np.random.default_rng(3).standard_normal((9, 6))
    u, s, vt = randomized_svd(a, 6, seed=1)
    np.testing.assert_allclose((u * s) @ vt, a, atol=1e-9)
    np.testing.assert_allclose(s, np.linalg.svd(a, compute_uv=False), rtol=1e-9)
    np.testing.assert_allclose(u.T @ u, np.eye(6), atol=1e-9)


def test_truncated_svd_rank_bounds():
    a = np.random.default_rng(0).standard_normal((6, 5))
    assert truncated_svd(a, 4, seed=0).r == 4
    for bad in (1, 5):
        with pytest.raises(ArgumentError):
            truncated_svd(a, bad, seed=0)


def test_default_rank():
    assert default_rank(500, 2000) == 100
    assert default_rank(30, 12) == 11


def test_vectorize_is_deterministic():
    corpus = corpus_of([f"alpha beta term{i % 4} extra{i % 3}" for i in range(12)])
    v1, e1 = vectorize(corpus, rank=3, seed=5)
    v2, e2 = vectorize(corpus, rank=3, seed=5)
    assert v1.terms == v2.terms
    assert np.array_equal(e1.matrix, e2.matrix)
    assert e1.matrix.shape == (12, 3)


def test_reduced_embedding_validation():
    with pytest.raises(ValidationError):
        ReducedEmbedding(np.zeros((3, 1)))
    with pytest.raises(ValidationError):
        ReducedEmbedding(np.array([[0.0, np.nan]]))


def _write_reduction(path, rows):
    path.write_text("".join(json.dumps({"id": i, "vector": v}) + "\n" for i, v in rows))
    return path


def test_external_reduction_realigns(tmp_path):
    corpus = corpus_of(["x y", "y z", "z w"])
    ids = corpus.ids
    path = _write_reduction(tmp_path / "r.jsonl", [(ids[2], [2, 2]), (ids[0], [0, 0]), (ids[1], [1, 1])])
    red = load_external_reduction(path, corpus)
    assert red.reducer_tag == "external"
    np.testing.assert_allclose(red.matrix, [[0, 0], [1, 1], [2, 2]])


def test_external_reduction_row_count(tmp_path):
    corpus = corpus_of(["x y", "y z", "z w"])
    path = _write_reduction(tmp_path / "r.jsonl", [(i, [0, 1]) for i in corpus.ids[:2]])
    with pytest.raises(ValidationError, match="2 rows"):
        load_external_reduction(path, corpus)


def test_union_find():
    uf = UnionFind(5)
    uf.union(3, 4)
    uf.union(0, 4)
    assert uf.find(0) == uf.find(3)
    assert uf.components() == [[0, 3, 4], [1], [2]]


def test_threshold_components_boundary():
    s = np.array([[1.0, 0.85, 0.2], [0.85, 1.0, 0.849], [0.2, 0.849, 1.0]])
    assert threshold_components(s, 0.85) == [[0, 1], [2]]
    assert threshold_components(s, 0.849) == [[0, 1, 2]]

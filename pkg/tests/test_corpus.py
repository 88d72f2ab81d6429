import json
import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterjudge.corpus import (
    VEGAN_KEYWORDS,
    Corpus,
    Document,
    cap_per_user,
    dedup_corpus,
    filter_keywords,
    load_corpus,
    parse_timestamp,
    save_corpus,
)
from clusterjudge.errors import ArgumentError, CorpusParseError, DuplicateIdError

from conftest import corpus_of, write_ndjson


def test_load_preserves_order_and_defaults(tmp_path, caplog):
    path = write_ndjson(tmp_path / "c.jsonl", [
        {"id": "b", "text": "second? no, first", "author": "u1", "timestamp": "2020-01-14T00:00:00Z",
         "platform": "x"},
        {"id": "a", "text": "hello there", "timestamp": 1_600_000_000},
        {"id": "c", "text": "no metadata"},
    ])
    with caplog.at_level(logging.WARNING):
        corpus = load_corpus(path)
    assert corpus.ids == ["b", "a", "c"]
    assert corpus[0].timestamp == 1578960000
    assert corpus[1].author == "unknown" and corpus[1].platform == "unknown"
    assert corpus[2].timestamp == 0
    assert "lacked a timestamp" in corpus.provenance
    assert any("timestamp" in r.message for r in caplog.records)


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "a", "text": "x y"}\n\n{"id": "b", "text": "z w"}\n')
    assert load_corpus(path).ids == ["a", "b"]


def test_missing_text_names_line(tmp_path):
    path = write_ndjson(tmp_path / "c.jsonl", [{"id": "a", "text": "fine"}, {"id": "b"}])
    with pytest.raises(CorpusParseError, match="line 2"):
        load_corpus(path)


def test_malformed_json_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "a", "text": "fine"}\n{"id": "b", "text": \n')
    with pytest.raises(CorpusParseError) as err:
        load_corpus(path)
    assert err.value.line_no == 2


def test_blank_text_is_rejected(tmp_path):
    path = write_ndjson(tmp_path / "c.jsonl", [{"id": "a", "text": "   "}])
    with pytest.raises(CorpusParseError, match="line 1"):
        load_corpus(path)


def test_duplicate_id(tmp_path):
    path = write_ndjson(tmp_path / "c.jsonl", [{"id": "a1", "text": "one"}, {"id": "a1", "text": "two"}])
    with pytest.raises(DuplicateIdError):
        load_corpus(path)
    with pytest.raises(DuplicateIdError):
        Corpus([Document("a", "x"), Document("a", "y")])


def test_unreadable_file(tmp_path):
    with pytest.raises(OSError):
        load_corpus(tmp_path / "missing.jsonl")


def test_timestamp_forms():
    assert parse_timestamp(0) == 0
    assert parse_timestamp("1970-01-02T00:00:00Z") == 86400
    assert parse_timestamp("1970-01-01T01:00:00+01:00") == 0
    with pytest.raises(ValueError):
        parse_timestamp("yesterday")
    with pytest.raises(ValueError):
        parse_timestamp(float("inf"))


def test_save_load_round_trip(tmp_path):
    corpus = corpus_of(["alpha beta", "gamma délta"], author="u", platform="bluesky").with_note("made in test")
    sidecar = save_corpus(corpus, tmp_path / "out.jsonl")
    again = load_corpus(tmp_path / "out.jsonl")
    assert again == corpus
    assert json.loads(sidecar.read_text())["provenance"] == "made in test"


@pytest.mark.parametrize("text,keywords,kept", [
    ("Try this #vegan recipe", ["vegan"], True),
    ("GoVegan now", ["govegan"], True),
    ("vegetable soup", ["vegan"], False),
    ("#PlantBased dinner", ["plantbased"], True),
])
def test_filter_keywords_examples(text, keywords, kept):
    assert len(filter_keywords(corpus_of([text]), keywords)) == int(kept)


def test_filter_keywords_errors_and_defaults():
    with pytest.raises(ArgumentError):
        filter_keywords(corpus_of(["x"]), [])
    assert "govegan" in VEGAN_KEYWORDS


def _authored(counts):
    docs = []
    for author, k in counts.items():
        docs += [Document(f"{author}-{i}", f"text {author} {i}", author=author) for i in range(k)]
    return Corpus(docs)


def test_cap_per_user():
    corpus = _authored({"u": 10, "v": 2, "w": 3})
    capped = cap_per_user(corpus, 3, seed=1)
    by = {a: sum(d.author == a for d in capped) for a in "uvw"}
    assert by == {"u": 3, "v": 2, "w": 3}
    assert capped.ids == [i for i in corpus.ids if i in set(capped.ids)]  # order kept
    assert cap_per_user(corpus, 3, seed=1).ids == capped.ids
    assert cap_per_user(corpus, 10, seed=1) == corpus
    with pytest.raises(ArgumentError):
        cap_per_user(corpus, 0, seed=1)


def test_dedup_examples():
    out, removed = dedup_corpus(corpus_of(["a", "a", "b"]))
    assert out.texts == ["a", "b"] and removed == 1
    out, removed = dedup_corpus(corpus_of(["a ", "a"]))
    assert len(out) == 1 and removed == 1
    base = corpus_of(["x", "y"])
    out, removed = dedup_corpus(base)
    assert out == base and removed == 0
    out, _ = dedup_corpus(corpus_of(["A", "a"]))  # case is significant
    assert len(out) == 2


texts = st.lists(st.sampled_from(["vegan cake", "Vegan Cake", "#vegan", "soup", "tofu bowl", "soup "]),
                 min_size=1, max_size=15)


@settings(max_examples=50, deadline=None)
@given(texts, st.integers(1, 4), st.integers(0, 3))
def test_transforms_are_idempotent_subsequences(items, cap, seed):
    docs = [Document(f"d{i}", t, author=f"u{i % 3}") for i, t in enumerate(items)]
    corpus = Corpus(docs)
    position = {d: i for i, d in enumerate(corpus.ids)}
    once = [
        filter_keywords(corpus, ["vegan"]),
        cap_per_user(corpus, cap, seed),
        dedup_corpus(corpus)[0],
    ]
    twice = [
        filter_keywords(once[0], ["vegan"]),
        cap_per_user(once[1], cap, seed),
        dedup_corpus(once[2])[0],
    ]
    for a, b in zip(once, twice):
        assert a == b
        idx = [position[i] for i in a.ids]
        assert idx == sorted(idx)
    for author in {d.author for d in corpus}:
        before = sum(d.author == author for d in corpus)
        after = sum(d.author == author for d in once[1])
        assert after == min(before, cap)

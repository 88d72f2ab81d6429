import logging
from datetime import date, datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterjudge.corpus import Corpus, Document
from clusterjudge.errors import ArgumentError
from clusterjudge.evaluate import chi_square_independence
from clusterjudge.providers import NONE_OF_THE_ABOVE
from clusterjudge.temporal import (
    best_window_start,
    densest_window,
    label_universe,
    match_volume,
    month_index,
    restrict_to_window,
    theme_month_correlations,
    theme_platform_table,
)

DAY = 86400
T0 = int(datetime(2020, 1, 1, tzinfo=timezone.utc).timestamp())


def corpus_from_daily(counts, start=T0, hour=12):
    docs = []
    for day, k in enumerate(counts):
        for j in range(k):
            docs.append(Document(f"d{day}-{j}", f"post {day} {j}", timestamp=start + day * DAY + hour * 3600))
    return Corpus(docs)


def brute_force(counts, days):
    best, best_i = -1, 0
    for i in range(max(1, len(counts) - days + 1)):
        total = sum(counts[i:i + days])
        if total > best:
            best, best_i = total, i
    return best_i, best


def test_dominant_block():
    counts = [1] * 31 + [10] * 28 + [1] * 31
    w = densest_window(corpus_from_daily(counts), 28)
    assert w.start == date(2020, 2, 1) and w.end == date(2020, 2, 28)
    assert w.post_count == 280 and w.days == 28


def test_uniform_counts_take_earliest():
    w = densest_window(corpus_from_daily([3] * 60), 28)
    assert w.start == date(2020, 1, 1) and w.post_count == 84


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=80), st.integers(1, 30))
def test_window_matches_brute_force(counts, days):
    assert best_window_start(counts, days) == brute_force(counts, days)


def test_window_count_matches_members():
    rng = np.random.default_rng(0)
    counts = rng.poisson(3, size=90).tolist()
    corpus = corpus_from_daily(counts)
    w = densest_window(corpus, 14)
    assert len(restrict_to_window(corpus, w)) == w.post_count
    # a post one second before midnight UTC still belongs to its own day
    assert w.contains(int(datetime.combine(w.end, datetime.max.time(), timezone.utc).timestamp()))


def test_undated_posts_are_ignored_and_degenerate(caplog):
    docs = [Document(f"u{i}", "x", timestamp=0) for i in range(3)]
    with caplog.at_level(logging.WARNING):
        w = densest_window(Corpus(docs), 28)
    assert w.degenerate and w.start == date(1970, 1, 1) and w.days == 28
    assert caplog.records
    mixed = Corpus(docs + list(corpus_from_daily([2, 2])))
    assert densest_window(mixed, 1).post_count == 2
    with pytest.raises(ArgumentError):
        densest_window(mixed, 0)


def test_match_volume():
    a = corpus_from_daily([40])
    b = corpus_from_daily([400], start=T0 + 10 * DAY)
    a2, b2 = match_volume(a, b, seed=3)
    assert a2 is a and len(b2) == 40
    assert set(b2.ids) <= set(b.ids)
    idx = [b.ids.index(i) for i in b2.ids]
    assert idx == sorted(idx)
    assert match_volume(a, b, seed=3)[1].ids == b2.ids
    assert match_volume(b, a, seed=3)[0].ids == b2.ids
    same = corpus_from_daily([40], start=T0 + 99 * DAY)
    assert match_volume(a, same, seed=1) == (a, same)
    with pytest.raises(ArgumentError):
        match_volume(a, Corpus([]), seed=0)


def test_theme_platform_table_example():
    universe = label_universe(["L1", "L2", "L3"])
    table = theme_platform_table({"L1": 2, "L2": 1}, {"L1": 1, "L3": 3}, universe, ("x", "bluesky"))
    assert table.rows == ["L1", "L2", "L3"]
    assert table.counts.tolist() == [[2, 1], [1, 0], [0, 3]]
    assert NONE_OF_THE_ABOVE in table.notes[0]
    assert table.to_tsv().splitlines()[0] == "theme\tx\tbluesky"
    assert table.counts.sum(axis=0).tolist() == [3, 4]


def test_theme_platform_table_from_label_lists():
    table = theme_platform_table(["L1", "L1", NONE_OF_THE_ABOVE], ["L2"], label_universe(["L1", "L2"]))
    assert table.counts.tolist() == [[2, 0], [0, 1], [1, 0]]


def test_theme_platform_table_errors():
    with pytest.raises(ArgumentError):
        theme_platform_table({}, [], ["L1"])
    with pytest.raises(ArgumentError):
        theme_platform_table(["L9"], ["L1"], ["L1"])
    single = theme_platform_table(["L1"], ["L1", "L1"], label_universe(["L1"]))
    assert single.counts.shape == (1, 2)
    with pytest.raises(ArgumentError):
        chi_square_independence(single.counts)


def test_month_index():
    stamps = [int(datetime(y, m, 15, tzinfo=timezone.utc).timestamp()) for y, m in
              [(2019, 11), (2019, 12), (2020, 1), (2019, 11)]]
    assert month_index(stamps).tolist() == [0, 1, 2, 0]


def test_theme_month_correlations():
    stamps = [int(datetime(2020, m, 1, tzinfo=timezone.utc).timestamp()) for m in (1, 1, 2, 2, 3, 3)]
    docs = Corpus([Document(f"d{i}", "t", timestamp=s) for i, s in enumerate(stamps)])
    assignments = {f"d{i}": lab for i, lab in enumerate(["A", "B", "A", "B", "B", "B"])}
    out = theme_month_correlations(docs, assignments, ["A", "B", "C"])
    x, y = np.array([1, 0, 1, 0, 0, 0], float), np.array([0, 0, 1, 1, 2, 2], float)
    expected = np.corrcoef(x, y)[0, 1]
    assert out["A"]["r"] == pytest.approx(expected)
    assert out["B"]["r"] == pytest.approx(-expected)
    assert "error" in out["C"]

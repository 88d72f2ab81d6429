"""Tools for platform-balanced comparisons across time: densest window, volume matching,
theme x platform tables and theme-month correlations."""
from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus
from .errors import ArgumentError, DegenerateError
from .evaluate import StatResult, pearson_r
from .providers.templates import NONE_OF_THE_ABOVE

logger = logging.getLogger(__name__)

EPOCH = date(1970, 1, 1)


@dataclass(frozen=True)
class WindowSelection:
    start: date
    end: date  # inclusive
    post_count: int
    degenerate: bool = False

    @property
    def days(self) -> int:
        return (self.end - self.start).days + 1

    def contains(self, timestamp: int) -> bool:
        day = datetime.fromtimestamp(timestamp, tz=timezone.utc).date()
        return self.start <= day <= self.end

    def to_dict(self) -> dict:
        return {"start": self.start.isoformat(), "end": self.end.isoformat(),
                "post_count": self.post_count, "degenerate": self.degenerate}


def _utc_day(timestamp: int) -> date:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).date()


def best_window_start(daily_counts: Sequence[int], days: int) -> tuple[int, int]:
    """Index and total of the first length-``days`` window with the largest sum.

    Series shorter than the window are treated as zero-padded on the right.
    """
    counts = np.asarray(daily_counts, dtype=np.int64)
    if days < 1:
        raise ArgumentError("window length must be at least one day")
    if len(counts) <= days:
        return 0, int(counts.sum())
    csum = np.concatenate([[0], np.cumsum(counts)])
    totals = csum[days:] - csum[:-days]
    i = int(np.argmax(totals))  # argmax returns the first maximum: earliest start wins
    return i, int(totals[i])


def densest_window(corpus: Corpus, days: int) -> WindowSelection:
    """The ``days``-long run of UTC calendar days holding the most posts."""
    if days < 1:
        raise ArgumentError("window length must be at least one day")
    if len(corpus) == 0:
        raise ArgumentError("corpus is empty")
    stamped = [d.timestamp for d in corpus if d.timestamp != 0]
    if not stamped:
        logger.warning("no document carries a timestamp; window is the epoch span")
        return WindowSelection(EPOCH, EPOCH + timedelta(days=days - 1), len(corpus), degenerate=True)
    day_of = [_utc_day(t) for t in stamped]
    first = min(day_of)
    span = (max(day_of) - first).days + 1
    counts = np.zeros(span, dtype=np.int64)
    for day in day_of:
        counts[(day - first).days] += 1
    i, total = best_window_start(counts, days)
    start = first + timedelta(days=i)
    return WindowSelection(start, start + timedelta(days=days - 1), total)


def restrict_to_window(corpus: Corpus, window: WindowSelection) -> Corpus:
    keep = [i for i, d in enumerate(corpus) if d.timestamp != 0 and window.contains(d.timestamp)]
    return corpus.subset(keep, f"restricted to {window.start}..{window.end}")


def match_volume(a: Corpus, b: Corpus, seed: int) -> tuple[Corpus, Corpus]:
    """Down-sample the larger corpus, without replacement, to the size of the smaller.

    Sampled documents keep their original order; the smaller corpus is returned as is.
    """
    if len(a) == 0 or len(b) == 0:
        raise ArgumentError("both corpora must be non-empty")
    if len(a) == len(b):
        return a, b
    rng = np.random.default_rng(seed)

    def shrink(big: Corpus, size: int) -> Corpus:
        keep = np.sort(rng.choice(len(big), size=size, replace=False))
        return big.subset(keep.tolist(), f"down-sampled to {size} (seed {seed})")

    if len(a) > len(b):
        return shrink(a, len(b)), b
    return a, shrink(b, len(a))


@dataclass
class ContingencyTable:
    rows: list[str]
    columns: list[str]
    counts: np.ndarray
    notes: list[str] = field(default_factory=list)

    def to_tsv(self) -> str:
        lines = ["theme\t" + "\t".join(self.columns)]
        for name, row in zip(self.rows, self.counts):
            lines.append(name + "\t" + "\t".join(str(int(c)) for c in row))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "columns": list(self.columns),
                "counts": self.counts.tolist(), "notes": list(self.notes)}


def _label_counts(assignments) -> Counter:
    """Assignments may be a label -> count mapping or an iterable of per-document labels."""
    if isinstance(assignments, Mapping):
        return Counter({str(k): int(v) for k, v in assignments.items()})
    return Counter(str(x) for x in assignments)


def theme_platform_table(assignments_a, assignments_b, label_universe: Iterable[str],
                         platforms: Sequence[str] = ("a", "b")) -> ContingencyTable:
    """Theme x platform count table over ``label_universe`` (row order kept).

    Rows that are zero on every platform are dropped and noted.
    """
    ca, cb = _label_counts(assignments_a), _label_counts(assignments_b)
    if sum(ca.values()) == 0 and sum(cb.values()) == 0:
        raise ArgumentError("both assignment sets are empty")
    universe = list(dict.fromkeys(label_universe))
    unknown = sorted((set(ca) | set(cb)) - set(universe))
    if unknown:
        raise ArgumentError(f"labels outside the universe: {unknown}")
    rows, counts, dropped = [], [], []
    for label in universe:
        row = [ca.get(label, 0), cb.get(label, 0)]
        if row == [0, 0]:
            dropped.append(label)
            continue
        rows.append(label)
        counts.append(row)
    notes = [f"dropped all-zero theme rows: {', '.join(dropped)}"] if dropped else []
    return ContingencyTable(rows, list(platforms), np.array(counts, dtype=np.int64).reshape(-1, 2), notes)


def label_universe(labels: Iterable[str]) -> list[str]:
    return list(dict.fromkeys([*labels, NONE_OF_THE_ABOVE]))


def month_index(timestamps: Sequence[int]) -> np.ndarray:
    """Months elapsed since the earliest timestamp's calendar month (0-based)."""
    days = [_utc_day(t) for t in timestamps]
    if not days:
        return np.zeros(0, dtype=np.int64)
    y0, m0 = min((d.year, d.month) for d in days)
    return np.array([(d.year - y0) * 12 + (d.month - m0) for d in days], dtype=np.int64)


def theme_month_correlations(corpus: Corpus, assignments: Mapping[str, str],
                             themes: Iterable[str]) -> dict[str, dict]:
    """Pearson correlation between "document has theme" and its month index, per theme.

    Only timestamped, assigned documents take part. Themes whose indicator (or the month
    index) is constant get an ``error`` entry instead of a coefficient.
    """
    docs = [d for d in corpus if d.timestamp != 0 and d.id in assignments]
    months = month_index([d.timestamp for d in docs])
    out = {}
    for theme in themes:
        indicator = np.array([assignments[d.id] == theme for d in docs], dtype=float)
        try:
            res: StatResult = pearson_r(indicator, months)
            out[theme] = {"r": res.statistic, "n": len(docs)}
        except (ArgumentError, DegenerateError) as exc:
            out[theme] = {"error": str(exc), "n": len(docs)}
    return out

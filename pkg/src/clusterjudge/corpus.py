"""Corpus loading and the pre-clustering transforms (keyword filter, per-user cap, dedup).

All transforms are pure: they return a new :class:`Corpus` whose documents are a
subsequence of the input, and they append a line to the provenance note.
"""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ArgumentError, CorpusParseError, DuplicateIdError

logger = logging.getLogger(__name__)

UNKNOWN = "unknown"

# Collection keywords for the vegan-discourse corpora; hashtags are matched without '#'.
VEGAN_KEYWORDS = (
    "vegan", "veganism", "plantbased", "meatfree",
    "vegandiet", "veganfood", "veganlife", "veganlover", "veganlifestyle",
    "vegancommunity", "veganfoodshare", "vegans", "veganfoodlove", "veganjourney",
    "plant-based", "cruelty-free", "dairyfree", "crueltyfree", "meat-free",
    "govegan", "veganfoodporn", "animal rights",
)


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    author: str = UNKNOWN
    timestamp: int = 0  # UTC epoch seconds; 0 means "not provided"
    platform: str = UNKNOWN

    @property
    def datetime(self) -> datetime:
        return datetime.fromtimestamp(self.timestamp, tz=timezone.utc)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "author": self.author,
            "timestamp": self.timestamp,
            "platform": self.platform,
        }


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        seen = set()
        for doc in self.documents:
            if doc.id in seen:
                raise DuplicateIdError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __getitem__(self, i):
        return self.documents[i]

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    @property
    def texts(self) -> list[str]:
        return [d.text for d in self.documents]

    def subset(self, keep: Iterable[int], note: str) -> Corpus:
        docs = [self.documents[i] for i in keep]
        return Corpus(docs, _append_note(self.provenance, note))

    def with_note(self, note: str) -> Corpus:
        return replace(self, provenance=_append_note(self.provenance, note))


def _append_note(provenance: str, note: str) -> str:
    return f"{provenance}\n{note}" if provenance else note


def parse_timestamp(value) -> int:
    """Accept integer epoch seconds or an RFC 3339 string; naive strings are read as UTC."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a timestamp")
    if isinstance(value, (int, float)):
        if not np.isfinite(value):
            raise ValueError("timestamp is not finite")
        return int(value)
    if isinstance(value, str):
        text = value.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise ValueError(f"unsupported timestamp type {type(value).__name__}")


def _document_from_record(record, line_no: int) -> tuple[Document, list[str]]:
    if not isinstance(record, dict):
        raise CorpusParseError(line_no, "expected a JSON object")
    for key in ("id", "text"):
        if key not in record or record[key] is None:
            raise CorpusParseError(line_no, f"missing required field {key!r}")
    text = str(record["text"])
    if not text.strip():
        raise CorpusParseError(line_no, "text is empty")
    warnings = []
    if record.get("timestamp") is None:
        timestamp = 0
        warnings.append(f"line {line_no}: missing timestamp, defaulted to epoch 0")
    else:
        try:
            timestamp = parse_timestamp(record["timestamp"])
        except (ValueError, OverflowError) as exc:
            raise CorpusParseError(line_no, f"bad timestamp: {exc}") from None
    doc = Document(
        id=str(record["id"]),
        text=text,
        author=str(record.get("author") or UNKNOWN),
        timestamp=timestamp,
        platform=str(record.get("platform") or UNKNOWN),
    )
    return doc, warnings


def load_corpus(path) -> Corpus:
    """Read a newline-delimited JSON corpus, preserving line order.

    Blank lines are skipped. Missing ``author``/``platform`` become ``"unknown"``;
    a missing ``timestamp`` becomes epoch 0 and is recorded in the provenance note.
    """
    path = Path(path)
    docs: list[Document] = []
    warnings: list[str] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(line_no, f"invalid JSON: {exc.msg}") from None
            doc, w = _document_from_record(record, line_no)
            if doc.id in seen:
                raise DuplicateIdError(f"line {line_no}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
            warnings.extend(w)
    for w in warnings:
        logger.warning(w)
    notes = [f"loaded {len(docs)} documents from {path.name}"]
    if warnings:
        notes.append(f"{len(warnings)} documents lacked a timestamp (epoch 0 used)")
    return Corpus(docs, "\n".join(notes))


def save_corpus(corpus: Corpus, path) -> Path:
    """Write ``path`` as NDJSON plus a ``<path>.provenance.json`` sidecar."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for doc in corpus:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
    sidecar = path.with_name(path.name + ".provenance.json")
    sidecar.write_text(
        json.dumps({"documents": len(corpus), "provenance": corpus.provenance}, indent=2) + "\n",
        encoding="utf-8",
    )
    return sidecar


def normalize_for_match(text: str) -> str:
    return text.lower().replace("#", "")


def filter_keywords(corpus: Corpus, keywords: Sequence[str]) -> Corpus:
    """Keep documents whose lowercased, '#'-stripped text contains any keyword."""
    needles = [normalize_for_match(k) for k in keywords if k and k.strip()]
    if not needles:
        raise ArgumentError("keyword list is empty")
    keep = [
        i for i, doc in enumerate(corpus)
        if any(k in normalize_for_match(doc.text) for k in needles)
    ]
    return corpus.subset(keep, f"keyword filter ({len(needles)} keywords): kept {len(keep)}/{len(corpus)}")


def cap_per_user(corpus: Corpus, max_per_user: int, seed: int) -> Corpus:
    """Down-sample each author to at most ``max_per_user`` posts.

    Authors over the cap get a seeded uniform sample without replacement; the
    retained posts keep their original relative order.
    """
    if max_per_user < 1:
        raise ArgumentError("max_per_user must be >= 1")
    by_author: dict[str, list[int]] = defaultdict(list)
    for i, doc in enumerate(corpus):
        by_author[doc.author].append(i)
    rng = np.random.default_rng(seed)
    drop: set[int] = set()
    for author in sorted(by_author):
        idx = by_author[author]
        if len(idx) > max_per_user:
            chosen = set(rng.choice(len(idx), size=max_per_user, replace=False).tolist())
            drop.update(j for pos, j in enumerate(idx) if pos not in chosen)
    keep = [i for i in range(len(corpus)) if i not in drop]
    return corpus.subset(keep, f"per-user cap {max_per_user} (seed {seed}): kept {len(keep)}/{len(corpus)}")


def dedup_corpus(corpus: Corpus) -> tuple[Corpus, int]:
    """Drop exact duplicates of the whitespace-trimmed text, keeping the first occurrence.

    Returns the deduplicated corpus and the number of removed documents.
    """
    seen: set[str] = set()
    keep = []
    for i, doc in enumerate(corpus):
        key = doc.text.strip()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    removed = len(corpus) - len(keep)
    return corpus.subset(keep, f"dedup: removed {removed}"), removed


"""Deterministic offline providers: a scripted judge backend and a hashed embedder.

The mock backend answers from a script first (exact request digest, then
substring rules) and otherwise falls back to simple lexical heuristics:

* summaries name the three most frequent content tokens,
* a summary is coherent when at least half of the texts mention one of its keywords,
* labels are the summary keywords in title case,
* assignment picks the label with the largest word overlap (hashtags ignored).
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ArgumentError
from ..text import ENGLISH_STOPWORDS, plain_tokens, tokenize
from .judge import Completion, JudgeRequest, Pricing, estimate_tokens, request_digest
from .templates import NONE_OF_THE_ABOVE

SUMMARY_FILLER = frozenset({"posts", "about"})
_MOCK_STOPWORDS = ENGLISH_STOPWORDS | SUMMARY_FILLER


def top_tokens(texts: Sequence[str], k: int = 3) -> list[str]:
    """Most frequent content tokens over ``texts``; ties broken alphabetically."""
    counts = Counter()
    for t in texts:
        counts.update(tokenize(t, _MOCK_STOPWORDS))
    return [tok for tok, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def heuristic_summary(texts: Sequence[str]) -> str:
    words = top_tokens(texts)
    if not words:
        return "Posts with no recognisable shared vocabulary."
    if len(words) == 1:
        return f"Posts about {words[0]}."
    return f"Posts about {', '.join(words[:-1])} and {words[-1]}."


def summary_keywords(summary: str) -> list[str]:
    return list(dict.fromkeys(tokenize(summary, _MOCK_STOPWORDS)))


def heuristic_coherence(summary: str, texts: Sequence[str]) -> str:
    keywords = set(summary_keywords(summary))
    hits = sum(bool(keywords & set(tokenize(t))) for t in texts)
    if keywords and 2 * hits >= len(texts):
        return f"COHERENT: {hits} of {len(texts)} posts mention the summary keywords"
    return f"INCOHERENT: only {hits} of {len(texts)} posts mention the summary keywords"


def heuristic_label(summary: str) -> str:
    words = summary_keywords(summary)[:3]
    return " ".join(w.title() for w in words) if words else "Miscellaneous"


def heuristic_consolidation(labels: Sequence[str]) -> str:
    counts = Counter()
    first_seen = {}
    for label in labels:
        for tok in tokenize(label):
            counts[tok] += 1
            first_seen.setdefault(tok, len(first_seen))
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))[:3]
    return " ".join(w.title() for w in ranked) if ranked else labels[0]


def heuristic_assignment(text: str, choices: Sequence[str]) -> str:
    words = set(plain_tokens(text))
    best, best_overlap = NONE_OF_THE_ABOVE, 0
    for choice in choices:
        if choice == NONE_OF_THE_ABOVE:
            continue
        overlap = len(words & set(tokenize(choice)))
        if overlap > best_overlap:
            best, best_overlap = choice, overlap
    return best


@dataclass(frozen=True)
class ScriptRule:
    """Reply ``reply`` to any ``template_id`` request whose prompt contains ``contains``."""
    template_id: str
    contains: str
    reply: str


class MockBackend:
    """Offline chat backend: script table keyed by request digest, then heuristics."""

    endpoint = "mock://judge"

    def __init__(self, script: dict[str, str] | None = None, rules: Sequence[ScriptRule] = (),
                 model: str = "mock-judge", pricing: Pricing | None = None):
        self.script = dict(script or {})
        self.rules = list(rules)
        self.model = model
        self.pricing = pricing or Pricing()
        self.calls = 0

    @classmethod
    def from_file(cls, path, **kwargs) -> MockBackend:
        """Load ``{"by_digest": {...}, "rules": [{template_id, contains, reply}]}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [ScriptRule(**r) for r in data.get("rules", [])]
        return cls(data.get("by_digest", {}), rules, **kwargs)

    def add(self, digest: str, reply: str) -> None:
        self.script[digest] = reply

    def complete(self, request: JudgeRequest) -> Completion:
        self.calls += 1
        reply = self._scripted(request)
        if reply is None:
            reply = self._heuristic(request)
        return Completion(reply, estimate_tokens(request.rendered_prompt), estimate_tokens(reply))

    def _scripted(self, request: JudgeRequest) -> str | None:
        digest = request_digest(self.endpoint, request.model, request.template_id,
                                request.rendered_prompt, request.temperature)
        if digest in self.script:
            return self.script[digest]
        for rule in self.rules:
            if rule.template_id == request.template_id and rule.contains in request.rendered_prompt:
                return rule.reply
        return None

    def _heuristic(self, request: JudgeRequest) -> str:
        s = request.slots
        tid = request.template_id
        if tid == "summarize":
            return heuristic_summary(s["texts"])
        if tid == "coherence":
            return heuristic_coherence(s["summary"], s["texts"])
        if tid == "label":
            return heuristic_label(s["summary"])
        if tid == "consolidate":
            return heuristic_consolidation(s["labels"])
        return heuristic_assignment(s["text"], s["choices"])


class HashEmbedder:
    """Signed feature hashing of content tokens into ``dim`` buckets, L2-normalised.

    Texts without any token are hashed as a single pseudo-token of their stripped form.
    """

    endpoint = "mock://embed"

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.model = f"hash-bow-{dim}"
        self._key = seed.to_bytes(8, "little", signed=True)

    def bucket(self, token: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest(),
                           "little")
        return h % self.dim, (1.0 if (h >> 63) & 1 else -1.0)

    def embed_one(self, text: str) -> np.ndarray:
        tokens = tokenize(text) or [text.strip().lower()]
        v = np.zeros(self.dim)
        for tok in tokens:
            b, sign = self.bucket(tok)
            v[b] += sign
        norm = np.linalg.norm(v)
        if norm == 0:
            # every token cancelled out; fall back to the unsigned bag
            for tok in tokens:
                v[self.bucket(tok)[0]] += 1.0
            norm = np.linalg.norm(v)
        return v / norm

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if any(not str(t).strip() for t in texts):
            raise ArgumentError("cannot embed an empty text")
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack([self.embed_one(str(t)) for t in texts])

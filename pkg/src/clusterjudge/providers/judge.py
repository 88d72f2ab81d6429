"""The semantic judge: prompt rendering, reply parsing, caching and usage accounting.

A :class:`Judge` wraps a *backend* (anything with ``endpoint``, ``model`` and
``complete(request) -> Completion``). Identical requests are answered from the
:class:`ResponseCache` without touching the backend; every backend call appends
one :class:`UsageRecord` to the ledger.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ..errors import ArgumentError, BudgetExceededError, ParseError, ProviderError
from .templates import NONE_OF_THE_ABOVE, SYSTEM_PROMPT, TEMPLATE_IDS, render, with_reminder

logger = logging.getLogger(__name__)

MAX_LABEL_WORDS = 8
DEFAULT_K_MAX = 7


@dataclass(frozen=True)
class JudgeRequest:
    template_id: str
    rendered_prompt: str
    model: str
    temperature: float = 0.0
    slots: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.template_id not in TEMPLATE_IDS:
            raise ArgumentError(f"unknown template {self.template_id!r}")
        if not self.rendered_prompt.strip():
            raise ArgumentError("rendered prompt is empty")

    def messages(self) -> list[dict]:
        return [{"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": self.rendered_prompt}]


@dataclass(frozen=True)
class Completion:
    content: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


@dataclass(frozen=True)
class UsageRecord:
    prompt_tokens: int
    completion_tokens: int
    estimated_cost: float
    latency: float  # milliseconds
    digest: str = ""
    template_id: str = ""


@dataclass(frozen=True)
class CoherenceVerdict:
    coherent: bool
    rationale: str

    def to_dict(self) -> dict:
        return {"coherent": self.coherent, "rationale": self.rationale}


@dataclass(frozen=True)
class Pricing:
    """Currency per 1000 tokens."""
    prompt_per_1k: float = 0.0
    completion_per_1k: float = 0.0

    def cost(self, prompt_tokens: int, completion_tokens: int) -> float:
        return (prompt_tokens * self.prompt_per_1k + completion_tokens * self.completion_per_1k) / 1000.0


def estimate_tokens(text: str) -> int:
    return max(1, math.ceil(len(text) / 4))


def request_digest(endpoint: str, model: str, template_id: str, rendered_prompt: str,
                   temperature: float) -> str:
    payload = json.dumps([endpoint, model, template_id, rendered_prompt, repr(float(temperature))],
                         ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Digest-keyed reply store; on disk when ``directory`` is given, else in memory.

    Writes go to a temporary file that is renamed into place, so a killed run never
    leaves a half-written entry. One lock per key keeps a single writer per digest.
    """

    def __init__(self, directory=None):
        self.directory = None if directory is None else Path(directory)
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, dict] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, digest: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(digest, threading.Lock())

    def _path(self, digest: str) -> Path:
        return self.directory / digest[:2] / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        if digest in self._memory:
            return self._memory[digest]
        if self.directory is None:
            return None
        path = self._path(digest)
        if not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            logger.warning("ignoring unreadable cache entry %s", path)
            return None
        self._memory[digest] = entry
        return entry

    def put(self, digest: str, entry: dict) -> None:
        self._memory[digest] = entry
        if self.directory is None:
            return
        path = self._path(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, path)

    def __len__(self) -> int:
        if self.directory is None:
            return len(self._memory)
        return sum(1 for _ in self.directory.glob("*/*.json"))


class UsageLedger:
    """Append-only record of backend calls, optionally mirrored to an NDJSON file."""

    def __init__(self, path=None):
        self.path = None if path is None else Path(path)
        self.records: list[UsageRecord] = []
        self._lock = threading.Lock()

    def append(self, record: UsageRecord) -> None:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")

    @property
    def total_cost(self) -> float:
        return math.fsum(r.estimated_cost for r in self.records)

    def __len__(self) -> int:
        return len(self.records)

    @staticmethod
    def replay(path) -> list[UsageRecord]:
        with Path(path).open(encoding="utf-8") as fh:
            return [UsageRecord(**json.loads(line)) for line in fh if line.strip()]


# -- reply parsers ------------------------------------------------------------

_QUOTES = "\"'`“”‘’"
_LABEL_PREFIX = re.compile(r"^(?:final\s+)?(?:label|theme|answer)\s*:\s*", re.IGNORECASE)


def _clean_line(text: str) -> str:
    text = text.strip().strip(_QUOTES).strip()
    return _LABEL_PREFIX.sub("", text).strip().strip(_QUOTES).strip()


def parse_summary(reply: str) -> str:
    summary = " ".join(line.strip() for line in reply.splitlines() if line.strip())
    summary = re.sub(r"^summary\s*:\s*", "", summary, flags=re.IGNORECASE).strip()
    if not summary:
        raise ParseError("empty summary")
    return summary


def parse_coherence(reply: str) -> CoherenceVerdict:
    lines = reply.strip().splitlines()
    first = lines[0].strip() if lines else ""
    upper = first.upper()
    for keyword, coherent in (("INCOHERENT", False), ("COHERENT", True)):
        if upper.startswith(keyword):
            rest = first[len(keyword):].lstrip(" \t:-\u2013\u2014,.")
            rationale = " ".join([rest] + [ln.strip() for ln in lines[1:] if ln.strip()]).strip()
            if not coherent and not rationale:
                rationale = "no reason given"
            return CoherenceVerdict(coherent, rationale)
    raise ParseError(f"reply does not start with COHERENT or INCOHERENT: {first[:60]!r}")


def parse_label(reply: str) -> str:
    lines = [ln for ln in reply.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty label")
    label = _clean_line(lines[0]).rstrip(".").strip()
    if not label:
        raise ParseError("empty label")
    words = label.split()
    if len(words) > MAX_LABEL_WORDS:
        logger.warning("label %r has %d words; truncated to %d", label, len(words), MAX_LABEL_WORDS)
        label = " ".join(words[:MAX_LABEL_WORDS])
    return label


def _fold(text: str) -> str:
    return " ".join(text.split()).casefold()


def parse_choice(reply: str, choices: Sequence[str]) -> str:
    lines = [ln for ln in reply.splitlines() if ln.strip()]
    if lines:
        candidate = _fold(re.sub(r"^\d+[.)]\s*", "", _clean_line(lines[0])).rstrip("."))
        for choice in choices:
            if _fold(choice) == candidate:
                return choice
    raise ParseError(f"reply is not one of the presented choices: {reply.strip()[:60]!r}")


# -- the judge ------------------------------------------------------------------

class Judge:
    """High-level judge operations over a chat-completion backend.

    Parameters
    ----------
    backend
        Object exposing ``endpoint``, ``model`` and ``complete(JudgeRequest)``.
    cache : ResponseCache, optional
        Defaults to a fresh in-memory cache.
    ledger : UsageLedger, optional
    temperature : float
        0 by default so that replies are reproducible.
    max_workers : int
        Bound on concurrent backend calls made through :meth:`map`.
    max_cost : float, optional
        Abort with :class:`BudgetExceededError` before a call that would push the
        estimated spend past this value.
    """

    def __init__(self, backend, cache: ResponseCache | None = None, ledger: UsageLedger | None = None,
                 temperature: float = 0.0, max_workers: int = 4, max_cost: float | None = None,
                 pricing: Pricing | None = None, k_max: int = DEFAULT_K_MAX):
        self.backend = backend
        self.cache = cache if cache is not None else ResponseCache()
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.temperature = temperature
        self.max_workers = max(1, int(max_workers))
        self.max_cost = max_cost
        self.pricing = pricing or getattr(backend, "pricing", None) or Pricing()
        self.k_max = k_max
        self.request_costs: dict[str, float] = {}
        self._spend_lock = threading.Lock()

    # -- plumbing --

    @property
    def model(self) -> str:
        return self.backend.model

    def request(self, template_id: str, **slots) -> JudgeRequest:
        return JudgeRequest(template_id, render(template_id, **slots), self.model,
                            self.temperature, slots)

    def digest(self, request: JudgeRequest) -> str:
        return request_digest(self.backend.endpoint, request.model, request.template_id,
                              request.rendered_prompt, request.temperature)

    def digest_for(self, template_id: str, **slots) -> str:
        """Cache/script key of the first-attempt request for these slots."""
        return self.digest(self.request(template_id, **slots))

    @property
    def spent(self) -> float:
        return self.ledger.total_cost

    @property
    def total_cost(self) -> float:
        """Billed cost of every distinct request this judge has needed, cached or not."""
        return math.fsum(self.request_costs.values())

    def complete(self, request: JudgeRequest) -> str:
        digest = self.digest(request)
        with self.cache.lock(digest):
            entry = self.cache.get(digest)
            if entry is None:
                entry = self._call_backend(request, digest)
                self.cache.put(digest, entry)
        self.request_costs[digest] = float(entry.get("usage", {}).get("estimated_cost", 0.0))
        return entry["content"]

    def _call_backend(self, request: JudgeRequest, digest: str) -> dict:
        with self._spend_lock:
            if self.max_cost is not None:
                estimate = self.pricing.cost(estimate_tokens(request.rendered_prompt), 64)
                if self.spent + estimate > self.max_cost:
                    raise BudgetExceededError(
                        f"next call would exceed max cost {self.max_cost} (spent {self.spent:.6f})")
        start = time.perf_counter()
        completion = self.backend.complete(request)
        latency = (time.perf_counter() - start) * 1000.0
        if completion.content is None:
            raise ProviderError("backend returned no content")
        pt = completion.prompt_tokens
        ct = completion.completion_tokens
        pt = estimate_tokens(request.rendered_prompt) if pt is None else int(pt)
        ct = estimate_tokens(completion.content) if ct is None else int(ct)
        record = UsageRecord(pt, ct, self.pricing.cost(pt, ct), latency, digest, request.template_id)
        self.ledger.append(record)
        return {"content": completion.content,
                "usage": {"prompt_tokens": pt, "completion_tokens": ct,
                          "estimated_cost": record.estimated_cost},
                "template_id": request.template_id}

    def _ask(self, template_id: str, parse: Callable[[str], object], **slots):
        request = self.request(template_id, **slots)
        reply = self.complete(request)
        try:
            return parse(reply)
        except ParseError:
            retry = JudgeRequest(template_id, with_reminder(template_id, request.rendered_prompt, reply),
                                 self.model, self.temperature, slots)
            return parse(self.complete(retry))

    def map(self, fn: Callable, items: Sequence) -> list:
        """Apply ``fn`` to ``items`` with at most ``max_workers`` in flight; order kept."""
        items = list(items)
        if self.max_workers == 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            return list(pool.map(fn, items))

    # -- operations --

    def summarize(self, texts: Sequence[str], k_max: int | None = None) -> str:
        texts = [str(t) for t in texts]
        limit = self.k_max if k_max is None else k_max
        if not 1 <= len(texts) <= limit:
            raise ArgumentError(f"summarize takes 1..{limit} texts, got {len(texts)}")
        return self._ask("summarize", parse_summary, texts=texts)

    def verify_coherence(self, summary: str, texts: Sequence[str]) -> CoherenceVerdict:
        if not summary.strip():
            raise ArgumentError("summary is empty")
        if not texts:
            raise ArgumentError("no texts to verify against")
        return self._ask("coherence", parse_coherence, summary=summary, texts=list(texts))

    def generate_label(self, summary: str) -> str:
        if not summary.strip():
            raise ArgumentError("summary is empty")
        return self._ask("label", parse_label, summary=summary)

    def consolidate_labels(self, labels: Sequence[str]) -> str:
        labels = list(labels)
        if len(labels) < 2:
            raise ArgumentError("consolidation needs at least two labels")
        if len({" ".join(l.split()) for l in labels}) == 1:
            return " ".join(labels[0].split())
        return self._ask("consolidate", parse_label, labels=labels)

    def merge_summaries(self, summaries: Sequence[str]) -> str:
        """One summary for a merged group, written from (at most ``k_max``) member summaries."""
        summaries = list(summaries)[: self.k_max]
        if len(summaries) == 1:
            return summaries[0]
        return self.summarize(summaries)

    def assign_label(self, text: str, labels: Sequence[str]) -> str:
        labels = [l for l in labels if _fold(l) != _fold(NONE_OF_THE_ABOVE)]
        if not labels:
            raise ArgumentError("label list is empty")
        choices = labels + [NONE_OF_THE_ABOVE]
        return self._ask("assign", lambda reply: parse_choice(reply, choices), text=text, choices=choices)

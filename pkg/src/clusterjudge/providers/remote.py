"""HTTP backends speaking the common hosted chat-completion / embedding wire format."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from typing import Sequence

import httpx
import numpy as np

from ..errors import ArgumentError, ConfigurationError, ProviderError
from .judge import Completion, JudgeRequest, Pricing, ResponseCache, UsageLedger, UsageRecord, estimate_tokens

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


def resolve_api_key(env_var: str | None) -> str | None:
    if not env_var:
        return None
    key = os.environ.get(env_var)
    if not key:
        raise ConfigurationError(f"environment variable {env_var} is not set")
    return key


class _HttpBackend:
    def __init__(self, endpoint: str, model: str, api_key_env: str | None = None,
                 client: httpx.Client | None = None, timeout: float = 60.0,
                 max_attempts: int = 3, backoff: float = 1.0, sleep=time.sleep):
        self.endpoint = endpoint
        self.model = model
        self.api_key = resolve_api_key(api_key_env)
        self.client = client or httpx.Client(timeout=timeout)
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep

    def _post(self, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = None
        for attempt in range(self.max_attempts):
            try:
                response = self.client.post(self.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
            else:
                if response.status_code < 300:
                    try:
                        return response.json()
                    except json.JSONDecodeError:
                        raise ProviderError("response body is not JSON") from None
                last = f"HTTP {response.status_code}"
                if response.status_code not in RETRYABLE_STATUS:
                    raise ProviderError(f"{self.endpoint}: {last}: {response.text[:200]}")
            if attempt + 1 < self.max_attempts:
                delay = self.backoff * 2 ** attempt
                logger.warning("%s failed (%s); retrying in %.1fs", self.endpoint, last, delay)
                self._sleep(delay)
        raise ProviderError(f"{self.endpoint}: giving up after {self.max_attempts} attempts ({last})")


class RemoteChatBackend(_HttpBackend):
    """POST ``{"model", "temperature", "messages"}``; read ``choices[0].message.content``."""

    def __init__(self, endpoint: str, model: str, api_key_env: str | None = None,
                 pricing: Pricing | None = None, **kwargs):
        super().__init__(endpoint, model, api_key_env, **kwargs)
        self.pricing = pricing or Pricing()

    def complete(self, request: JudgeRequest) -> Completion:
        body = {"model": request.model, "temperature": request.temperature,
                "messages": request.messages()}
        data = self._post(body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError("reply lacks choices[0].message.content") from None
        usage = data.get("usage") or {}
        return Completion(content or "", usage.get("prompt_tokens"), usage.get("completion_tokens"))


class RemoteEmbedder(_HttpBackend):
    """POST ``{"model", "input": [...]}``; read ``data[i].embedding`` and L2-normalise.

    Vectors are cached per text so repeated texts never trigger another request.
    """

    def __init__(self, endpoint: str, model: str, api_key_env: str | None = None,
                 cache: ResponseCache | None = None, ledger: UsageLedger | None = None,
                 pricing: Pricing | None = None, batch_size: int = 64, **kwargs):
        super().__init__(endpoint, model, api_key_env, **kwargs)
        self.cache = cache if cache is not None else ResponseCache()
        self.ledger = ledger
        self.pricing = pricing or Pricing()
        self.batch_size = batch_size

    def _key(self, text: str) -> str:
        raw = json.dumps(["embed", self.endpoint, self.model, text], ensure_ascii=False)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        texts = [str(t) for t in texts]
        if any(not t.strip() for t in texts):
            raise ArgumentError("cannot embed an empty text")
        keys = [self._key(t) for t in texts]
        first = {}
        for i, k in enumerate(keys):
            first.setdefault(k, i)
        missing = [i for k, i in first.items() if self.cache.get(k) is None]
        for start in range(0, len(missing), self.batch_size):
            batch = missing[start:start + self.batch_size]
            t0 = time.perf_counter()
            data = self._post({"model": self.model, "input": [texts[i] for i in batch]})
            latency = (time.perf_counter() - t0) * 1000.0
            try:
                vectors = [row["embedding"] for row in data["data"]]
            except (KeyError, TypeError):
                raise ProviderError("reply lacks data[].embedding") from None
            if len(vectors) != len(batch):
                raise ProviderError(f"asked for {len(batch)} embeddings, got {len(vectors)}")
            for i, vec in zip(batch, vectors):
                self.cache.put(keys[i], {"embedding": list(map(float, vec))})
            if self.ledger is not None:
                pt = (data.get("usage") or {}).get("prompt_tokens") or sum(
                    estimate_tokens(texts[i]) for i in batch)
                self.ledger.append(UsageRecord(int(pt), 0, self.pricing.cost(int(pt), 0), latency,
                                               "", "embed"))
        out = np.array([self.cache.get(k)["embedding"] for k in keys], dtype=float)
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ProviderError("provider returned a zero embedding")
        return out / norms

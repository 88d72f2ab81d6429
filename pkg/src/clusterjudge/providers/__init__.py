"""Judge and embedding providers (remote HTTP or deterministic mock)."""
from .judge import (
    CoherenceVerdict,
    Completion,
    Judge,
    JudgeRequest,
    Pricing,
    ResponseCache,
    UsageLedger,
    UsageRecord,
    request_digest,
)
from .mock import HashEmbedder, MockBackend, ScriptRule
from .remote import RemoteChatBackend, RemoteEmbedder
from .templates import NONE_OF_THE_ABOVE, TEMPLATE_IDS

__all__ = [
    "CoherenceVerdict", "Completion", "HashEmbedder", "Judge", "JudgeRequest", "MockBackend",
    "NONE_OF_THE_ABOVE", "Pricing", "RemoteChatBackend", "RemoteEmbedder", "ResponseCache",
    "ScriptRule", "TEMPLATE_IDS", "UsageLedger", "UsageRecord", "request_digest",
]


def embed_texts(embedder, texts):
    """Unit vectors for ``texts`` from any embedder exposing ``embed_texts``."""
    return embedder.embed_texts(texts)

"""Prompt templates for the five judge tasks.

Each template defines its slots and the reply contract the parser in
:mod:`clusterjudge.providers.judge` enforces.
"""
from __future__ import annotations

from ..errors import ArgumentError

TEMPLATE_IDS = ("summarize", "coherence", "label", "consolidate", "assign")
NONE_OF_THE_ABOVE = "None of the above"

SYSTEM_PROMPT = (
    "You analyse short social media posts. Follow the requested reply format exactly "
    "and do not add commentary outside it."
)


def _numbered(items) -> str:
    return "\n".join(f"{i}. {t}" for i, t in enumerate(items, start=1))


def _summarize(texts) -> str:
    return (
        "Below are posts that a clustering algorithm placed in the same group.\n\n"
        f"{_numbered(texts)}\n\n"
        "Write one concise paragraph describing the common theme of these posts. "
        "Reply with the paragraph only."
    )


def _coherence(summary, texts) -> str:
    return (
        f"Group summary:\n{summary}\n\n"
        f"Posts in the group:\n{_numbered(texts)}\n\n"
        "Is the summary supported by a consistent theme across these posts? "
        "Start the first line of your reply with COHERENT or INCOHERENT, "
        "followed by a colon and a one-sentence reason."
    )


def _label(summary) -> str:
    return (
        f"Group summary:\n{summary}\n\n"
        "Give a short label (at most 8 words) naming this theme. Reply with the label only."
    )


def _consolidate(labels) -> str:
    return (
        "These theme labels were judged to describe the same category:\n"
        f"{_numbered(labels)}\n\n"
        "Write one label (at most 8 words) that covers all of them. Reply with the label only."
    )


def _assign(text, choices) -> str:
    return (
        f"Post:\n{text}\n\n"
        f"Candidate themes:\n{_numbered(choices)}\n\n"
        "Which theme fits the post best? Reply with the theme text exactly as listed, "
        f'or "{NONE_OF_THE_ABOVE}" if none fits.'
    )


_RENDERERS = {
    "summarize": _summarize,
    "coherence": _coherence,
    "label": _label,
    "consolidate": _consolidate,
    "assign": _assign,
}

REMINDERS = {
    "summarize": "Reply with a single non-empty paragraph.",
    "coherence": "Your first line must begin with the word COHERENT or INCOHERENT.",
    "label": "Reply with a non-empty label of at most 8 words.",
    "consolidate": "Reply with a non-empty label of at most 8 words.",
    "assign": "Reply with exactly one of the listed themes, copied verbatim.",
}


def render(template_id: str, **slots) -> str:
    try:
        renderer = _RENDERERS[template_id]
    except KeyError:
        raise ArgumentError(f"unknown template {template_id!r}") from None
    return renderer(**slots)


def with_reminder(template_id: str, prompt: str, bad_reply: str) -> str:
    return (
        f"{prompt}\n\nYour previous reply could not be used:\n{bad_reply.strip() or '(empty)'}\n"
        f"{REMINDERS[template_id]}"
    )

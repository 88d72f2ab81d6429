"""Tokenisation shared by the vectorizer, the hash embedder and the mock judge."""
from __future__ import annotations

import re

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION = re.compile(r"@\w+")
_HASHTAG = re.compile(r"#([^\W_]+)")
_WORD = re.compile(r"[^\W_]+")

ENGLISH_STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been before
being below between both but by can could did do does doing down during each few for
from further had has have having he her here hers herself him himself his how i if in
into is it its itself just me more most my myself no nor not now of off on once only
or other our ours ourselves out over own same she should so some such than that the
their theirs them themselves then there these they this those through to too under
until up very was we were what when where which while who whom why will with would you
your yours yourself yourselves im its dont cant wont get got also like one us rt amp
""".split())


def tokenize(text: str, stopwords=ENGLISH_STOPWORDS, min_len: int = 2) -> list[str]:
    """Lowercased runs of letters/digits after removing URLs and @-mentions.

    '#' is dropped so ``#vegan`` and ``vegan`` give the same token.
    """
    text = _MENTION.sub(" ", _URL.sub(" ", text)).replace("#", " ").lower()
    return [t for t in _WORD.findall(text) if len(t) >= min_len and t not in stopwords]


def plain_tokens(text: str, stopwords=ENGLISH_STOPWORDS) -> list[str]:
    """Like :func:`tokenize` but hashtag words are left out entirely."""
    text = _HASHTAG.sub(" ", _MENTION.sub(" ", _URL.sub(" ", text)))
    return tokenize(text, stopwords)

"""Generator for the bundled 200-post synthetic corpus.

Six content topics (two of them near-duplicates that a clusterer tends to split),
a block of giveaway spam whose bodies are drawn from *different* topics, and a few
unrelated posts. Ground-truth topics are returned separately; the corpus file
itself carries only the standard document fields.

The bundled copy lives at ``clusterjudge/data/synthetic_corpus.jsonl``; regenerate
it with ``python -m clusterjudge.synthetic``.
"""
from __future__ import annotations

import json
import random
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path

TOPICS = {
    "party_desserts": (["chocolate", "cake", "dessert"],
                       ["birthday", "party", "celebration", "guests", "candles", "friends"]),
    "baking_desserts": (["chocolate", "cake", "dessert"],
                        ["oven", "bake", "flour", "batter", "whisk", "loaf"]),
    "dinner_recipes": (["curry", "lentil", "dinner"],
                       ["chickpea", "spicy", "rice", "tofu", "simmer", "garlic"]),
    "animal_rights": (["cruelty", "animals", "factory"],
                      ["farming", "suffering", "slaughter", "welfare", "cages", "justice"]),
    "skincare": (["shampoo", "soap", "skincare"],
                 ["organic", "lotion", "hair", "bars", "glow", "moisturizer"]),
    "fitness": (["protein", "workout", "gym"],
                ["muscle", "athlete", "strength", "training", "gains", "reps"]),
}
TOPIC_SIZES = {"party_desserts": 26, "baking_desserts": 26, "dinner_recipes": 28,
               "animal_rights": 28, "skincare": 28, "fitness": 28}
SPAM_WORDS = ["giveaway", "follow", "retweet", "win", "prize", "winner", "enter", "contest"]
N_SPAM = 26
NOISE_WORDS = ["weather", "monday", "traffic", "train", "meeting", "sleep", "coffee", "phone",
               "music", "movie", "rain", "election", "football", "laptop", "garden", "bus"]
N_NOISE = 10
# judge script marking the giveaway clusters (bodies from mixed topics) as incoherent
COHERENCE_SCRIPT = {
    "by_digest": {},
    "rules": [{"template_id": "coherence", "contains": "giveaway",
               "reply": "INCOHERENT: giveaway boilerplate attached to posts on unrelated topics"}],
}
HASHTAGS = ["#vegan", "#veganfood", "#govegan", "#plantbased", "#veganlife"]

PLATFORM_WINDOWS = {
    "x": (datetime(2019, 10, 1, tzinfo=timezone.utc), 150),
    "bluesky": (datetime(2025, 6, 1, tzinfo=timezone.utc), 30),
}


def _post(rng: random.Random, core: list[str], extra: list[str]) -> str:
    words = rng.sample(core, 3) + rng.sample(extra, 3)
    rng.shuffle(words)
    return " ".join(words) + " " + rng.choice(HASHTAGS)


def make_synthetic_corpus(seed: int = 7):
    """Return ``(records, truth)`` where truth maps document id to its source topic."""
    rng = random.Random(seed)
    items = []
    for topic, (core, extra) in TOPICS.items():
        for _ in range(TOPIC_SIZES[topic]):
            items.append((topic, _post(rng, core, extra)))
    topic_names = list(TOPICS)
    for _ in range(N_SPAM):
        topic = rng.choice(topic_names)
        core, extra = TOPICS[topic]
        body = rng.sample(core, 1) + rng.sample(extra, 1)
        spam = rng.sample(SPAM_WORDS, 5)
        items.append((f"spam:{topic}", " ".join(spam + body) + " " + rng.choice(HASHTAGS)))
    for _ in range(N_NOISE):
        items.append(("noise", " ".join(rng.sample(NOISE_WORDS, 4)) + " #vegan"))
    rng.shuffle(items)

    records, truth = [], {}
    for i, (topic, text) in enumerate(items):
        platform = "x" if i % 2 == 0 else "bluesky"
        start, span_days = PLATFORM_WINDOWS[platform]
        # x posts cluster around late January so the densest window is well defined
        if platform == "x" and rng.random() < 0.4:
            offset = timedelta(days=105 + rng.randrange(28), seconds=rng.randrange(86400))
        else:
            offset = timedelta(days=rng.randrange(span_days), seconds=rng.randrange(86400))
        doc_id = f"d{i:03d}"
        records.append({
            "id": doc_id,
            "text": text,
            "author": f"user{rng.randrange(60):02d}",
            "timestamp": (start + offset).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "platform": platform,
        })
        truth[doc_id] = topic
    return records, truth


def bundled_corpus_path() -> Path:
    return Path(str(resources.files("clusterjudge") / "data" / "synthetic_corpus.jsonl"))


def bundled_truth() -> dict[str, str]:
    path = resources.files("clusterjudge") / "data" / "synthetic_truth.json"
    return json.loads(path.read_text(encoding="utf-8"))


def write_bundle(directory) -> None:
    directory = Path(directory)
    records, truth = make_synthetic_corpus()
    with (directory / "synthetic_corpus.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    (directory / "synthetic_truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n",
                                                    encoding="utf-8")
    (directory / "synthetic_script.json").write_text(json.dumps(COHERENCE_SCRIPT, indent=1) + "\n",
                                                     encoding="utf-8")


if __name__ == "__main__":
    write_bundle(Path(__file__).parent / "data")

import json

import numpy as np
import pytest

from clusterjudge.config import Config
from clusterjudge.corpus import Corpus, Document
from clusterjudge.synthetic import bundled_corpus_path

DATA = bundled_corpus_path().parent


def make_blobs(seed=42, n_per=50, sigma=0.05, centers=((0.0, 0.0), (1.5, 0.0), (0.0, 1.5))):
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(c, sigma, size=(n_per, len(c))) for c in centers])
    truth = np.repeat(np.arange(len(centers)), n_per)
    return pts, truth


@pytest.fixture
def blobs():
    return make_blobs()


def corpus_of(texts, **fields):
    return Corpus([Document(id=f"d{i}", text=t, **fields) for i, t in enumerate(texts)])


def write_ndjson(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def synthetic_config(tmp_path):
    """Config for the bundled fixture with the scripted mock judge; cache inside tmp_path."""
    def make(cache_dir=None, **sections):
        data = {
            "corpus": {"path": str(DATA / "synthetic_corpus.jsonl")},
            "provider": {"kind": "mock", "script": str(DATA / "synthetic_script.json"),
                         "cache_dir": None if cache_dir is None else str(cache_dir)},
        }
        for key, value in sections.items():
            data.setdefault(key, {}).update(value)
        return Config(data)
    return make

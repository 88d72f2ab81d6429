"""Run configuration: one YAML document with a section per pipeline component.

Command-line flags and ``--set section.key=value`` overrides are applied on top of
the file. The config digest covers the resolved values and the contents of every
referenced input file, so changing any of them forces the stages to be recomputed.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .errors import ConfigurationError

DEFAULTS: dict = {
    "run": {"seed": 0},
    "corpus": {
        "path": None,
        "keywords": None,       # list of keywords, or null to keep every document
        "max_per_user": None,   # per-author cap, or null for no cap
        "dedup": True,
    },
    "vectorizer": {
        "min_df": 2,
        "rank": None,           # null: min(100, N - 1, V - 1)
        "external_reduction": None,
    },
    "clustering": {
        "min_samples_grid": [2, 3, 5, 10],
        "min_cluster_size_grid": [5, 10, 15, 0.05, 0.1, 0.2, 0.25],
        "max_workers": 1,
    },
    "refine": {
        "k_representatives": 5,
        "tau": None,            # null: choose from tau_grid
        "tau_grid": [0.75, 0.80, 0.85, 0.90],
        "fallback_tau": 0.85,
        "label_tau": 0.85,
        "evaluation_space": "embedding",   # or "svd"
    },
    "provider": {
        "kind": "mock",
        "script": None,
        "temperature": 0.0,
        "max_workers": 4,
        "max_cost": None,
        "cache_dir": None,      # null: <run_dir>/cache
        "chat": {
            "endpoint": "https://api.openai.com/v1/chat/completions",
            "model": "gpt-4o",
            "api_key_env": "OPENAI_API_KEY",
            "prompt_per_1k": 0.0025,
            "completion_per_1k": 0.01,
        },
        "embedding": {
            "kind": "hash",     # or "remote"
            "dim": 64,
            "endpoint": "https://api.openai.com/v1/embeddings",
            "model": "text-embedding-3-small",
            "api_key_env": "OPENAI_API_KEY",
            "prompt_per_1k": 0.00002,
        },
    },
    "temporal": {
        "window_days": 28,
        "reference_platform": "x",
        "seed": 0,
    },
}

PATH_KEYS = ("corpus.path", "vectorizer.external_reduction", "provider.script")


def _merge(base: dict, update: dict, where: str = "") -> dict:
    for key, value in update.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"{where}{key} must be a mapping")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value
    return base


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Config:
    def __init__(self, data: dict | None = None, base_dir=None):
        self.data = _merge(copy.deepcopy(DEFAULTS), data or {})
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        for key in PATH_KEYS:
            value = self.get(key)
            if value is not None:
                self.set(key, str((self.base_dir / value).resolve()))

    @classmethod
    def load(cls, path=None, overrides=()) -> Config:
        data = {}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
            except (OSError, yaml.YAMLError) as exc:
                raise ConfigurationError(f"cannot read config {path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigurationError(f"{path} must hold a mapping")
            base = path.parent
        cfg = cls(data, base)
        for item in overrides:
            cfg.apply_override(item)
        return cfg

    def get(self, dotted: str):
        node = self.data
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                raise ConfigurationError(f"unknown config key {dotted}")
            node = node[part]
        return node

    def set(self, dotted: str, value) -> None:
        *parents, last = dotted.split(".")
        node = self.data
        for part in parents:
            if not isinstance(node.get(part), dict):
                raise ConfigurationError(f"unknown config key {dotted}")
            node = node[part]
        if last not in node or isinstance(node[last], dict):
            raise ConfigurationError(f"unknown config key {dotted}")
        if dotted in PATH_KEYS and value is not None:
            value = str(Path(value).resolve())
        node[last] = value

    def apply_override(self, item: str) -> None:
        """Apply ``section.key=value``; the value is parsed as YAML (``0.8``, ``null``, ``[1, 2]``)."""
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"override {item!r}: {exc}") from None
        self.set(key.strip(), value)

    def digest(self) -> str:
        """Hash of the resolved settings, with referenced files replaced by their content hash."""
        data = copy.deepcopy(self.data)
        for key in PATH_KEYS:
            value = self.get(key)
            if value is None:
                continue
            try:
                content = _sha256_file(value)
            except OSError as exc:
                raise ConfigurationError(f"{key}: cannot read {value}: {exc}") from None
            *parents, last = key.split(".")
            node = data
            for part in parents:
                node = node[part]
            node[last] = {"sha256": content}
        raw = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False)

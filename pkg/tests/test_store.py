import json
import logging
import os
import subprocess
import sys

import numpy as np
import pytest

from clusterjudge import store
from clusterjudge.config import Config
from clusterjudge.errors import (ConfigurationError, NotARunError, RunLockedError, StageConflictError,
                                 StageOrderError, StoreError)

PAYLOAD = {"values": np.array([1 / 3, -0.0, 2.5e-12]), "n": np.int64(4), "flag": np.bool_(True),
           "nested": {"b": (1, 2), "a": float("nan")}}


def test_normalize_rounds_and_cleans():
    out = store.normalize(PAYLOAD)
    assert out["values"] == [0.333333333, 0.0, 2.5e-12]
    assert out["n"] == 4 and out["flag"] is True
    assert out["nested"] == {"b": [1, 2], "a": None}
    assert store.round_sig(123456789.123) == 123456789.0


def test_save_load_round_trip(tmp_path):
    store.init_run(tmp_path, "cfg")
    store.save_stage(tmp_path, "01_corpus", PAYLOAD)
    assert store.load_stage(tmp_path, "01_corpus") == store.normalize(PAYLOAD)
    text = store.stage_path(tmp_path, "01_corpus").read_text()
    assert text.index('"flag"') < text.index('"n"') < text.index('"nested"')  # sorted keys


def test_identical_saves_identical_digests(tmp_path):
    store.init_run(tmp_path / "a", "cfg")
    store.init_run(tmp_path / "b", "cfg")
    da = store.save_stage(tmp_path / "a", "02_vectors", PAYLOAD)
    db = store.save_stage(tmp_path / "b", "02_vectors", PAYLOAD)
    assert da == db == store.file_digest(store.stage_path(tmp_path / "a", "02_vectors"))
    assert store.save_stage(tmp_path / "a", "02_vectors", PAYLOAD) == da  # no-op re-save


def test_conflict_without_force(tmp_path):
    store.init_run(tmp_path, "cfg")
    store.save_stage(tmp_path, "03_clusters", {"x": 1})
    with pytest.raises(StageConflictError):
        store.save_stage(tmp_path, "03_clusters", {"x": 2})
    store.save_stage(tmp_path, "03_clusters", {"x": 2}, force=True)
    assert store.load_stage(tmp_path, "03_clusters") == {"x": 2}


def test_resume_examples(tmp_path, caplog):
    store.init_run(tmp_path, "cfg")
    assert store.resume(tmp_path) == "01_corpus"
    for i, stage in enumerate(store.STAGES[:3]):
        store.save_stage(tmp_path, stage, {"stage": i})
    assert store.resume(tmp_path) == "04_summaries"
    path = store.stage_path(tmp_path, "02_vectors")
    path.write_text(path.read_text().replace("1", "7"))
    with caplog.at_level(logging.WARNING):
        assert store.resume(tmp_path) == "02_vectors"
    assert any("corrupted" in r.message for r in caplog.records)
    assert store.stage_status(tmp_path, "02_vectors") == "pending"
    assert store.stage_status(tmp_path, "03_clusters") == "done"


def test_missing_stage_file_is_demoted(tmp_path):
    store.init_run(tmp_path, "cfg")
    store.save_stage(tmp_path, "01_corpus", {})
    store.stage_path(tmp_path, "01_corpus").unlink()
    assert store.verify(tmp_path) == ["01_corpus"]


def test_not_a_run(tmp_path):
    with pytest.raises(NotARunError):
        store.resume(tmp_path)
    (tmp_path / store.MANIFEST).write_text("{broken")
    with pytest.raises(NotARunError):
        store.read_manifest(tmp_path)


def test_load_pending_and_unknown_stage(tmp_path):
    store.init_run(tmp_path, "cfg")
    with pytest.raises(StageOrderError):
        store.load_stage(tmp_path, "05_refined")
    with pytest.raises(StoreError):
        store.save_stage(tmp_path, "09_extra", {})


def test_config_change_resets_stages(tmp_path):
    m = store.init_run(tmp_path, "cfg-1", run_id="r1")
    store.save_stage(tmp_path, "01_corpus", {})
    assert store.init_run(tmp_path, "cfg-1")["stages"]["01_corpus"]["status"] == "done"
    again = store.init_run(tmp_path, "cfg-2")
    assert again["run_id"] == m["run_id"] == "r1"
    assert all(v["status"] == "pending" for v in again["stages"].values())


def test_invalidate_and_fail(tmp_path):
    store.init_run(tmp_path, "cfg")
    for stage in store.STAGES[:4]:
        store.save_stage(tmp_path, stage, {})
    store.invalidate_from(tmp_path, "03_clusters")
    assert [store.stage_status(tmp_path, s) for s in store.STAGES[:4]] == ["done", "done", "pending", "pending"]
    store.mark_failed(tmp_path, "03_clusters")
    assert store.stage_status(tmp_path, "03_clusters") == "failed"


def test_atomic_write_leaves_no_temp_files(tmp_path):
    store.atomic_write_text(tmp_path / "f.json", "one\n")
    store.atomic_write_text(tmp_path / "f.json", "two\n")
    assert [p.name for p in tmp_path.iterdir()] == ["f.json"]
    assert (tmp_path / "f.json").read_text() == "two\n"


def test_run_lock(tmp_path):
    with store.RunLock(tmp_path):
        assert (tmp_path / store.LOCK).read_text() == str(os.getpid())
        other = subprocess.run([sys.executable, "-c", (
            "import sys\nfrom clusterjudge.store import RunLock\nfrom clusterjudge.errors import RunLockedError\n"
            f"try:\n    RunLock({str(tmp_path)!r}).acquire()\nexcept RunLockedError:\n    sys.exit(3)\n")])
        assert other.returncode == 3
    assert not (tmp_path / store.LOCK).exists()


def test_stale_lock_is_taken_over(tmp_path):
    dead = subprocess.Popen([sys.executable, "-c", "pass"])
    dead.wait()
    (tmp_path / store.LOCK).write_text(str(dead.pid))
    with store.RunLock(tmp_path):
        assert (tmp_path / store.LOCK).read_text() == str(os.getpid())


def test_garbled_lock_blocks(tmp_path):
    (tmp_path / store.LOCK).write_text("not a pid")
    with pytest.raises(RunLockedError):
        store.RunLock(tmp_path).acquire()


# -- configuration ---------------------------------------------------------

def test_config_defaults_and_overrides(tmp_path):
    corpus = tmp_path / "c.jsonl"
    corpus.write_text('{"id": "a", "text": "x"}\n')
    cfg_file = tmp_path / "run.yaml"
    cfg_file.write_text("corpus:\n  path: c.jsonl\nrefine:\n  label_tau: 0.9\n")
    cfg = Config.load(cfg_file, ["refine.tau=0.8", "clustering.min_samples_grid=[2, 3]", "refine.tau_grid=null"])
    assert cfg.get("corpus.path") == str(corpus.resolve())
    assert cfg.get("refine.label_tau") == 0.9
    assert cfg.get("refine.tau") == 0.8
    assert cfg.get("clustering.min_samples_grid") == [2, 3]
    assert cfg.get("refine.tau_grid") is None
    assert cfg.get("vectorizer.min_df") == 2
    reloaded = Config(json.loads(json.dumps(cfg.data)), tmp_path)
    assert reloaded.digest() == cfg.digest()


def test_config_digest_tracks_values_and_files(tmp_path):
    corpus = tmp_path / "c.jsonl"
    corpus.write_text('{"id": "a", "text": "x"}\n')
    base = Config({"corpus": {"path": str(corpus)}})
    d0 = base.digest()
    changed = Config({"corpus": {"path": str(corpus)}})
    changed.apply_override("run.seed=5")
    assert changed.digest() != d0
    corpus.write_text('{"id": "a", "text": "y"}\n')
    assert base.digest() != d0


def test_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        Config({"refine": {"no_such_key": 1}})
    with pytest.raises(ConfigurationError):
        Config().apply_override("refine.tau")
    with pytest.raises(ConfigurationError):
        Config().set("provider.chat", 1)
    bad = tmp_path / "bad.yaml"
    bad.write_text("- a list\n")
    with pytest.raises(ConfigurationError):
        Config.load(bad)
    with pytest.raises(ConfigurationError):
        Config({"corpus": {"path": str(tmp_path / "missing.jsonl")}}).digest()

"""Run directory: one JSON file per pipeline stage plus a manifest of their digests.

Stage files are written atomically with sorted keys and floats rounded to nine
significant digits, so identical inputs give byte-identical files on any platform.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import uuid
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import NotARunError, RunLockedError, StageConflictError, StageOrderError, StoreError

logger = logging.getLogger(__name__)

STAGES = ("01_corpus", "02_vectors", "03_clusters", "04_summaries",
          "05_refined", "06_labels", "07_assignments", "08_report")
MANIFEST = "manifest.json"
LOCK = ".lock"
PENDING, DONE, FAILED = "pending", "done", "failed"


def round_sig(x: float, digits: int = 9) -> float:
    return float(f"{x:.{digits}g}")


def normalize(obj):
    """Plain-JSON copy of ``obj``: numpy unwrapped, tuples to lists, floats rounded.

    Non-finite floats become ``None``.
    """
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return normalize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        x = round_sig(x)
        return 0.0 if x == 0 else x  # no negative zero in the output
    return obj


def dumps(payload) -> str:
    return json.dumps(normalize(payload), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def stage_path(run_dir, stage: str) -> Path:
    _check_stage(stage)
    return Path(run_dir) / f"{stage}.json"


def _check_stage(stage: str) -> None:
    if stage not in STAGES:
        raise StoreError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")


def _fresh_stages() -> dict:
    return {s: {"status": PENDING, "output_digest": None, "input_digest": None} for s in STAGES}


def init_run(run_dir, config_digest: str, run_id: str | None = None) -> dict:
    """Create the run directory and manifest, or reopen an existing one.

    Reopening with a different config digest resets every stage to pending, so a run
    never silently reuses stages computed under another configuration.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / MANIFEST
    if path.exists():
        manifest = read_manifest(run_dir)
        if manifest["config_digest"] != config_digest:
            logger.warning("configuration changed (%s -> %s); all stages reset to pending",
                           manifest["config_digest"][:12], config_digest[:12])
            manifest["config_digest"] = config_digest
            manifest["stages"] = _fresh_stages()
            write_manifest(run_dir, manifest)
        return manifest
    manifest = {
        "run_id": run_id or uuid.uuid4().hex[:12],
        "config_digest": config_digest,
        "created": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "stages": _fresh_stages(),
    }
    write_manifest(run_dir, manifest)
    return manifest


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise NotARunError(f"{run_dir} has no {MANIFEST}; not a run directory")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise NotARunError(f"{path} is not valid JSON: {exc}") from None
    for s in STAGES:
        manifest.setdefault("stages", {}).setdefault(
            s, {"status": PENDING, "output_digest": None, "input_digest": None})
    return manifest


def write_manifest(run_dir, manifest: dict) -> None:
    atomic_write_text(Path(run_dir) / MANIFEST, json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def stage_status(run_dir, stage: str) -> str:
    _check_stage(stage)
    return read_manifest(run_dir)["stages"][stage]["status"]


def save_stage(run_dir, stage: str, payload, input_digest: str | None = None,
               force: bool = False) -> str:
    """Write ``payload`` for ``stage`` and mark it done; returns the file digest.

    Re-saving a done stage with different content raises StageConflictError unless
    ``force``; re-saving identical content is a no-op.
    """
    _check_stage(stage)
    manifest = read_manifest(run_dir)
    text = dumps(payload)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    entry = manifest["stages"][stage]
    if entry["status"] == DONE and entry["output_digest"] != digest and not force:
        raise StageConflictError(
            f"stage {stage} is already done with digest {entry['output_digest'][:12]}; "
            f"new payload has {digest[:12]} (use force to overwrite)")
    atomic_write_text(stage_path(run_dir, stage), text)
    entry.update(status=DONE, output_digest=digest, input_digest=input_digest)
    write_manifest(run_dir, manifest)
    return digest


def mark_failed(run_dir, stage: str) -> None:
    manifest = read_manifest(run_dir)
    _check_stage(stage)
    manifest["stages"][stage]["status"] = FAILED
    write_manifest(run_dir, manifest)


def invalidate_from(run_dir, stage: str) -> None:
    """Reset ``stage`` and every later stage to pending."""
    manifest = read_manifest(run_dir)
    _check_stage(stage)
    for s in STAGES[STAGES.index(stage):]:
        manifest["stages"][s] = {"status": PENDING, "output_digest": None, "input_digest": None}
    write_manifest(run_dir, manifest)


def load_stage(run_dir, stage: str):
    manifest = read_manifest(run_dir)
    _check_stage(stage)
    if manifest["stages"][stage]["status"] != DONE:
        raise StageOrderError(f"stage {stage} has not been completed")
    return json.loads(stage_path(run_dir, stage).read_text(encoding="utf-8"))


def verify(run_dir) -> list[str]:
    """Demote done stages whose file is missing or altered; returns the demoted names."""
    manifest = read_manifest(run_dir)
    demoted = []
    for s in STAGES:
        entry = manifest["stages"][s]
        if entry["status"] != DONE:
            continue
        path = stage_path(run_dir, s)
        if not path.exists() or file_digest(path) != entry["output_digest"]:
            logger.warning("stage %s is corrupted or missing; demoted to pending", s)
            entry.update(status=PENDING, output_digest=None, input_digest=None)
            demoted.append(s)
    if demoted:
        write_manifest(run_dir, manifest)
    return demoted


def resume(run_dir) -> str | None:
    """Verify every done stage, then return the first stage that is not done (None if all are)."""
    verify(run_dir)
    manifest = read_manifest(run_dir)
    for s in STAGES:
        if manifest["stages"][s]["status"] != DONE:
            return s
    return None


class RunLock:
    """Exclusive writer lock: a ``.lock`` file holding the owner's pid.

    A lock left behind by a dead process on this host is taken over.
    """

    def __init__(self, run_dir):
        self.path = Path(run_dir) / LOCK
        self._held = False

    def acquire(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                raise RunLockedError(f"{self.path.parent} is locked by another writer ({self.path})") from None
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            self._held = True
            return
        raise RunLockedError(f"could not acquire {self.path}")

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip())
        except (OSError, ValueError):
            return False
        if pid == os.getpid():
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def release(self) -> None:
        if self._held:
            self.path.unlink(missing_ok=True)
            self._held = False

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()

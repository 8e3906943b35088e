"""Shared plumbing: canonical JSON, atomic file writes, per-sample seeding,
and JSON-lines logging on stderr."""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
import time


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, fixed separators, trailing newline.

    Output bytes depend only on the data, which is what makes pipeline
    reruns byte-identical.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def write_json_atomic(path, obj) -> None:
    """Write via a temp file + rename so readers never see partial output."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(obj))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def sample_seed(global_seed: int, sample_id: str) -> int:
    """Stable per-sample RNG seed; parallelism order cannot affect outputs."""
    digest = hashlib.sha256(f"{global_seed}:{sample_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def log_event(stage: str, **fields) -> None:
    """One structured JSON line on stderr."""
    rec = {"ts": round(time.time(), 3), "stage": stage}
    rec.update(fields)
    sys.stderr.write(json.dumps(rec, sort_keys=True, default=str) + "\n")
    sys.stderr.flush()

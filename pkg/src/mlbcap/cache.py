"""Content-addressed cache for backend completions.

Entries are keyed by a digest of (stage, backend id, model name, prompt
bytes, image bytes), so editing a template or swapping a model invalidates
stale entries automatically. Writes go through a temp file plus rename, so a
concurrent reader sees either a complete entry or none.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path


def completion_key(
    stage: str,
    backend_id: str,
    model_name: str,
    prompt_text: str,
    image_ref: str | None = None,
) -> str:
    hasher = hashlib.sha256()
    for part in (stage, backend_id, model_name):
        hasher.update(part.encode("utf-8"))
        hasher.update(b"\x00")
    hasher.update(hashlib.sha256(prompt_text.encode("utf-8")).digest())
    if image_ref:
        path = Path(image_ref)
        if path.is_file():
            hasher.update(hashlib.sha256(path.read_bytes()).digest())
        else:
            hasher.update(image_ref.encode("utf-8"))
    return hasher.hexdigest()


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0

    def as_dict(self) -> dict:
        return {"hits": self.hits, "misses": self.misses}


class CompletionCache:
    """Directory-backed text cache; safe for concurrent readers and writers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> str | None:
        try:
            payload = json.loads(self._path(key).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None
        return payload["text"]

    def put(self, key: str, text: str) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp.{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(json.dumps({"text": text}), encoding="utf-8")
        os.replace(tmp, path)

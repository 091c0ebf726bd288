"""
Digest-keyed fixture store for record/replay of backend traffic.

The file is one JSON object: request digest -> {"reply": text, "usage": {...}}.
Keys are written sorted so a re-recorded file diffs cleanly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Optional, Union

from packages.core.errors import FixtureConflictError
from packages.core.models import TokenUsage

logger = logging.getLogger(__name__)


class FixtureStore:
    """Thread-safe in-memory map backed by a JSON file."""

    def __init__(self, path: Optional[Union[str, Path]] = None, entries: Optional[dict[str, dict[str, Any]]] = None):
        self.path = Path(path) if path else None
        self._entries: dict[str, dict[str, Any]] = dict(entries or {})
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: Union[str, Path], save_to: Optional[Union[str, Path]] = None) -> "FixtureStore":
        """Read ``path``. Saves go to ``save_to`` when given, else back to ``path``."""
        path = Path(path)
        if not path.exists():
            logger.info(f"Fixture file {path} does not exist yet, starting empty")
            return cls(save_to or path)
        payload = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(payload, dict):
            raise ValueError(f"fixture file {path} must hold a JSON object")
        logger.info(f"Loaded {len(payload)} fixtures from {path}")
        return cls(save_to or path, payload)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: object) -> bool:
        return digest in self._entries

    def get(self, digest: str) -> Optional[dict[str, Any]]:
        with self._lock:
            entry = self._entries.get(digest)
            return dict(entry) if entry is not None else None

    def record(self, digest: str, reply_text: str, usage: Optional[TokenUsage] = None) -> None:
        """Store a reply. Re-recording identical text is a no-op."""
        entry = {
            "reply": reply_text,
            "usage": (usage or TokenUsage()).model_dump(mode="json"),
        }
        with self._lock:
            existing = self._entries.get(digest)
            if existing is not None:
                if existing.get("reply") != reply_text:
                    raise FixtureConflictError(digest)
                return
            self._entries[digest] = entry

    def to_json(self) -> str:
        with self._lock:
            return json.dumps(self._entries, sort_keys=True, indent=1, ensure_ascii=False) + "\n"

    def content_digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path: Optional[Union[str, Path]] = None) -> Path:
        target = Path(path) if path else self.path
        if target is None:
            raise ValueError("no path to save fixtures to")
        write_text_atomic(target, self.to_json())
        logger.info(f"Saved {len(self)} fixtures to {target}")
        return target


def record_fixture(store: FixtureStore, digest: str, reply_text: str, usage: Optional[TokenUsage] = None) -> None:
    store.record(digest, reply_text, usage)


def write_text_atomic(path: Union[str, Path], text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

"""
Deterministic replay backends.

``ScriptedBackend`` answers from two sources, in order:
1. exact request-digest entries (a ``FixtureStore``)
2. ordered regex rules matched against the request's user text

Both depend only on request content, never on call order, so a whole
pipeline run is reproducible under any scheduling.

Fixture files are either a flat ``{digest: {"reply": ..., "usage": ...}}``
object or ``{"entries": {...}, "rules": [{"pattern": ..., "reply": ...}]}``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import regex

from apps.runner.adapters.base import Backend
from packages.core.errors import FixtureMissError
from packages.core.models import BackendReply, BackendRequest, TokenUsage
from packages.core.storage.fixtures import FixtureStore

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScriptRule:
    pattern: regex.Pattern
    reply: str

    @classmethod
    def compile(cls, pattern: str, reply: str) -> "ScriptRule":
        return cls(regex.compile(pattern, regex.DOTALL), reply)


class ScriptedBackend(Backend):
    """Replays recorded or hand-written replies."""

    name = "scripted"

    def __init__(
        self,
        store: Optional[FixtureStore] = None,
        rules: Iterable[Union[ScriptRule, tuple[str, str]]] = (),
    ):
        super().__init__()
        self.store = store or FixtureStore()
        self.rules: list[ScriptRule] = [
            r if isinstance(r, ScriptRule) else ScriptRule.compile(*r) for r in rules
        ]

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ScriptedBackend":
        path = Path(path)
        payload: dict[str, Any] = json.loads(path.read_text(encoding="utf-8"))
        if "entries" in payload or "rules" in payload:
            entries = payload.get("entries") or {}
            rules = [(r["pattern"], r["reply"]) for r in payload.get("rules") or []]
        else:
            entries, rules = payload, []
        logger.info(f"Scripted backend: {len(entries)} digest entries, {len(rules)} rules from {path}")
        return cls(FixtureStore(path, entries), rules)

    def lookup(self, request: BackendRequest) -> tuple[str, TokenUsage]:
        digest = request.digest
        entry = self.store.get(digest)
        if entry is not None:
            return str(entry.get("reply", "")), TokenUsage(**(entry.get("usage") or {}))
        for rule in self.rules:
            if rule.pattern.search(request.user_text):
                return rule.reply, TokenUsage()
        raise FixtureMissError(digest)

    def generate(self, request: BackendRequest) -> BackendReply:
        self._account(request)
        text, usage = self.lookup(request)
        return BackendReply(text=text, usage=usage)


class RecordingBackend(Backend):
    """Wraps a live backend and stores every reply under its request digest."""

    def __init__(self, inner: Backend, store: FixtureStore):
        super().__init__()
        self.inner = inner
        self.store = store
        self.name = f"recording({inner.name})"

    @property
    def supports_token_scoring(self) -> bool:
        return self.inner.supports_token_scoring

    def generate(self, request: BackendRequest) -> BackendReply:
        digest = self._account(request)
        reply = self.inner.generate(request)
        self.store.record(digest, reply.text, reply.usage)
        return reply

    def close(self) -> None:
        self.inner.close()

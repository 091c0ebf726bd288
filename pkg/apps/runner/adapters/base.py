"""
Backend interface shared by every adapter.

A backend turns a ``BackendRequest`` into a ``BackendReply``. Backends are
called from worker threads (``asyncio.to_thread``) and must be safe for
concurrent use. Every backend counts its calls so tests and reports can
check call budgets.
"""

from __future__ import annotations

import logging
import threading
from abc import ABC, abstractmethod
from collections import Counter
from typing import Optional

from packages.core.models import BackendReply, BackendRequest
from packages.core.prompts.parsers import strip_readiness
from packages.core.prompts.templates import TemplateName, TemplateRegistry
from packages.core.vocab.bank import render_bank, violation_report

logger = logging.getLogger(__name__)

VOCABULARY_MARKER = "Vocabulary Bank:"


def request_digest(request: BackendRequest) -> str:
    """sha256 of the canonical JSON form of a request."""
    return request.digest


class Backend(ABC):
    """Base class with thread-safe call accounting."""

    name = "backend"

    def __init__(self) -> None:
        self._accounting_lock = threading.Lock()
        self.calls = 0
        self.digest_counts: Counter[str] = Counter()

    def _account(self, request: BackendRequest) -> str:
        digest = request.digest
        with self._accounting_lock:
            self.calls += 1
            self.digest_counts[digest] += 1
        logger.debug(f"{self.name} request {digest[:12]}")
        return digest

    @property
    def supports_token_scoring(self) -> bool:
        return False

    @abstractmethod
    def generate(self, request: BackendRequest) -> BackendReply:
        """Return model text for ``request``. Refusals are ordinary text."""

    def generate_constrained(self, request: BackendRequest) -> BackendReply:
        raise NotImplementedError(f"{self.name} backend cannot mask tokens; use the local backend")

    def close(self) -> None:
        pass


def generate_prompt_constrained(
    backend: Backend,
    request: BackendRequest,
    registry: Optional[TemplateRegistry] = None,
) -> BackendReply:
    """
    Ask for an in-bank answer by instruction, then audit the reply.

    Requests whose text does not already carry a vocabulary bank get the
    vocabulary suffix appended. Out-of-bank words are logged and returned in
    ``reply.violations``; they are never fatal.
    """
    bank = request.constraint
    if bank is None:
        return backend.generate(request)

    if VOCABULARY_MARKER not in request.user_text:
        registry = registry or TemplateRegistry()
        suffix = registry.render(TemplateName.VOCABULARY_SUFFIX, {"vocabulary": render_bank(bank)})
        request = request.model_copy(update={"user_text": request.user_text + suffix})

    reply = backend.generate(request)
    violations = tuple(violation_report(bank, strip_readiness(reply.text)))
    if violations:
        logger.warning(
            f"Reply to {request.digest[:12]} uses {len(violations)} out-of-bank word(s): {', '.join(violations)}"
        )
        reply = reply.model_copy(update={"violations": violations})
    return reply

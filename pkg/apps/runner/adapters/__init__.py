"""
Generation backends.
"""

import logging
from pathlib import Path
from typing import Optional

from apps.runner.adapters.base import Backend, generate_prompt_constrained, request_digest
from apps.runner.adapters.chat_completions import ChatCompletionsBackend
from apps.runner.adapters.scripted import RecordingBackend, ScriptedBackend, ScriptRule
from apps.runner.adapters.token_scorer import (
    HuggingFaceTokenScorer,
    LocalScoringBackend,
    TokenScorer,
    allowed_token_mask,
)
from packages.core.run_config import BackendKind, RunConfig
from packages.core.storage.fixtures import FixtureStore

logger = logging.getLogger(__name__)


def build_backend(config: RunConfig, fixtures_out: Optional[Path] = None) -> Backend:
    """Backend for a validated run config."""
    if config.backend == BackendKind.SCRIPTED:
        return ScriptedBackend.from_file(config.fixtures_path)

    if config.backend == BackendKind.LOCAL:
        return LocalScoringBackend(HuggingFaceTokenScorer(config.local_model))

    backend: Backend = ChatCompletionsBackend(model=config.model, base_url=config.base_url)
    if config.record_fixtures:
        # an existing fixtures_path only seeds the store; recordings land in the run
        if config.fixtures_path:
            store = FixtureStore.load(config.fixtures_path, save_to=fixtures_out)
        else:
            store = FixtureStore(fixtures_out)
        logger.info(f"Recording fixtures to {store.path}")
        backend = RecordingBackend(backend, store)
    return backend


__all__ = [
    "Backend",
    "ChatCompletionsBackend",
    "HuggingFaceTokenScorer",
    "LocalScoringBackend",
    "RecordingBackend",
    "ScriptRule",
    "ScriptedBackend",
    "TokenScorer",
    "allowed_token_mask",
    "build_backend",
    "generate_prompt_constrained",
    "request_digest",
]

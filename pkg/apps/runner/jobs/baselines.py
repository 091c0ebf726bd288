"""
Baseline prompting strategies: zero-shot vanilla, one-shot chain of
thought, and tree of thoughts with majority voting over sampled chains.
"""

from __future__ import annotations

import asyncio
import logging
from collections import Counter
from typing import Optional

from apps.runner.adapters.base import Backend
from apps.runner.jobs.stoctot import BACKEND_FAILURES
from packages.core.analytics.metrics import normalize_answer
from packages.core.models import (
    BackendReply,
    BackendRequest,
    GenerationParams,
    QAExample,
    Strategy,
    StrategyOutcome,
)
from packages.core.prompts.parsers import direct_answer, extract_marked_answer
from packages.core.prompts.templates import TemplateName, TemplateRegistry, render_evidence

logger = logging.getLogger(__name__)

DEFAULT_N_PATHS = 3


async def _generate(backend: Backend, request: BackendRequest, semaphore: Optional[asyncio.Semaphore]) -> BackendReply:
    if semaphore is None:
        return await asyncio.to_thread(backend.generate, request)
    async with semaphore:
        return await asyncio.to_thread(backend.generate, request)


def _failed(example: QAExample, strategy: Strategy, calls: int, error: Exception) -> StrategyOutcome:
    logger.warning(f"{strategy.value} failed on {example.id}: {error}")
    return StrategyOutcome(
        example_id=example.id,
        strategy=strategy,
        backend_calls=calls,
        failed=True,
        failure_reason=str(error),
    )


async def run_vanilla(
    example: QAExample,
    backend: Backend,
    params: Optional[GenerationParams] = None,
    registry: Optional[TemplateRegistry] = None,
    semaphore: Optional[asyncio.Semaphore] = None,
) -> StrategyOutcome:
    """One call: question and evidence in, answer out."""
    registry = registry or TemplateRegistry()
    text = registry.render(
        TemplateName.VANILLA,
        {"question": example.question, "evidence": render_evidence(example.evidence_pool)},
    )
    request = BackendRequest(user_text=text, params=params or GenerationParams())
    try:
        reply = await _generate(backend, request, semaphore)
    except BACKEND_FAILURES as e:
        return _failed(example, Strategy.VANILLA, 1, e)
    return StrategyOutcome(
        example_id=example.id,
        strategy=Strategy.VANILLA,
        answer=direct_answer(reply.text),
        trace={"prompt_digest": request.digest, "reply": reply.text},
        backend_calls=1,
    )


async def run_cot(
    example: QAExample,
    backend: Backend,
    params: Optional[GenerationParams] = None,
    registry: Optional[TemplateRegistry] = None,
    semaphore: Optional[asyncio.Semaphore] = None,
) -> StrategyOutcome:
    """One call with a worked example; the answer follows the last "Answer:" marker."""
    registry = registry or TemplateRegistry()
    text = registry.render(
        TemplateName.COT,
        {"question": example.question, "evidence": render_evidence(example.evidence_pool)},
    )
    request = BackendRequest(user_text=text, params=params or GenerationParams())
    try:
        reply = await _generate(backend, request, semaphore)
    except BACKEND_FAILURES as e:
        return _failed(example, Strategy.COT, 1, e)

    parsed = extract_marked_answer(reply.text)
    return StrategyOutcome(
        example_id=example.id,
        strategy=Strategy.COT,
        answer=parsed.value or "",
        trace={"prompt_digest": request.digest, "reply": reply.text},
        backend_calls=1,
        flags=("no_answer_marker",) if parsed.warnings else (),
    )


def majority_vote(answers: list[str]) -> int:
    """
    Index of the winning answer. Votes compare normalized answers; ties go
    to the answer whose first vote came earliest.
    """
    keys = [normalize_answer(a) for a in answers]
    counts = Counter(keys)
    best = max(counts.values())
    for index, key in enumerate(keys):
        if counts[key] == best:
            return index
    raise ValueError("no answers to vote on")


async def run_tot(
    example: QAExample,
    backend: Backend,
    n_paths: int = DEFAULT_N_PATHS,
    params: Optional[GenerationParams] = None,
    registry: Optional[TemplateRegistry] = None,
    semaphore: Optional[asyncio.Semaphore] = None,
) -> StrategyOutcome:
    """
    ``n_paths`` independent reasoning chains sampled concurrently, then a
    majority vote over their answers.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    registry = registry or TemplateRegistry()
    evidence = render_evidence(example.evidence_pool)
    requests = [
        BackendRequest(
            user_text=registry.render(
                TemplateName.TOT_VOTE,
                {"question": example.question, "evidence": evidence, "path_index": str(i + 1), "n_paths": str(n_paths)},
            ),
            params=params or GenerationParams(),
        )
        for i in range(n_paths)
    ]
    results = await asyncio.gather(*(_generate(backend, r, semaphore) for r in requests), return_exceptions=True)

    answers: list[str] = []
    replies: list[Optional[str]] = []
    for result in results:
        if isinstance(result, BACKEND_FAILURES):
            replies.append(None)
            continue
        if isinstance(result, BaseException):
            raise result
        replies.append(result.text)
        answers.append(extract_marked_answer(result.text).value or "")

    if not answers:
        return _failed(example, Strategy.TOT, n_paths, RuntimeError("every reasoning line failed"))

    winner = majority_vote(answers)
    return StrategyOutcome(
        example_id=example.id,
        strategy=Strategy.TOT,
        answer=answers[winner],
        trace={"prompt_digests": [r.digest for r in requests], "replies": replies, "votes": answers},
        backend_calls=n_paths,
        flags=("partial_paths",) if len(answers) < n_paths else (),
    )

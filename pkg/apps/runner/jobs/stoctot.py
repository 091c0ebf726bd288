"""
Stochastic tree-of-thought engine.

Breadth-wise loop per example:
    expand open nodes into sub-questions
    prune children that repeat a question already on their path
    answer the surviving children (vocabulary-constrained)
    estimate validity for each answered child of the same parent
then finalize every candidate leaf against the original question, score
each root-to-leaf path and pick the best one.

Backend calls run in worker threads under a shared semaphore. Results are
gathered in submission order and applied to the tree by this coordinator
in node-id order, so a scripted run builds the same tree at any
concurrency.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

from apps.runner.adapters.base import Backend, generate_prompt_constrained
from packages.core.errors import (
    ConstraintExhaustedError,
    EngineFailureError,
    FixtureMissError,
    PreconditionError,
    TransportError,
)
from packages.core.models import (
    BackendReply,
    BackendRequest,
    GenerationParams,
    QAExample,
    Strategy,
    StrategyOutcome,
    VocabularyBank,
)
from packages.core.prompts.parsers import (
    direct_answer,
    parse_probability,
    parse_readiness,
    parse_subquestions,
    parse_yes_no,
)
from packages.core.prompts.templates import (
    DemoFlavor,
    TemplateName,
    TemplateRegistry,
    render_chain,
    render_evidence,
    render_question_list,
)
from packages.core.reasoning.tree import (
    NodeStatus,
    PathScore,
    ReasoningNode,
    ReasoningTree,
    select_answer,
)
from packages.core.run_config import ConstraintMode, RunConfig
from packages.core.vocab.bank import Stoplist, build_bank, render_bank

logger = logging.getLogger(__name__)

# Errors that mark a node as failed instead of aborting the example.
BACKEND_FAILURES = (TransportError, FixtureMissError)

# Share of failed nodes above which the example is reported as failed.
FAILURE_RATE_LIMIT = 0.5


@dataclass(frozen=True)
class EngineConfig:
    branching_limit: int = 3
    max_depth: int = 5
    constraint_mode: ConstraintMode = ConstraintMode.SOFT
    params: GenerationParams = GenerationParams()
    demo_flavor: DemoFlavor = DemoFlavor.BOTH
    prune_against_ancestors: bool = True
    validity_default: float = 0.5
    concurrency: int = 4
    budget_seconds: Optional[float] = None

    @classmethod
    def from_run_config(cls, config: RunConfig, budget_seconds: Optional[float] = None) -> "EngineConfig":
        return cls(
            branching_limit=config.branching_limit,
            max_depth=config.max_depth,
            constraint_mode=config.constraint_mode,
            params=config.generation_params,
            demo_flavor=config.demo_flavor,
            prune_against_ancestors=config.prune_against_ancestors,
            validity_default=config.validity_default,
            concurrency=config.concurrency,
            budget_seconds=budget_seconds,
        )


def _same_question(a: str, b: str) -> bool:
    return " ".join(a.lower().split()) == " ".join(b.lower().split())


CallResult = Union[BackendReply, Exception]


class StocTotEngine:
    """Runs the reasoning tree for one example at a time; reusable across examples."""

    def __init__(
        self,
        backend: Backend,
        config: Optional[EngineConfig] = None,
        registry: Optional[TemplateRegistry] = None,
        stoplist: Optional[Stoplist] = None,
        semaphore: Optional[asyncio.Semaphore] = None,
    ):
        self.backend = backend
        self.config = config or EngineConfig()
        self.registry = registry or TemplateRegistry()
        self.stoplist = stoplist
        self._semaphore = semaphore

    # --- backend plumbing ------------------------------------------------------

    def _sem(self) -> asyncio.Semaphore:
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.config.concurrency)
        return self._semaphore

    def _request(self, user_text: str, constraint: Optional[VocabularyBank] = None) -> BackendRequest:
        return BackendRequest(user_text=user_text, params=self.config.params, constraint=constraint)

    async def _call(self, fn: Callable[[BackendRequest], BackendReply], request: BackendRequest) -> BackendReply:
        async with self._sem():
            return await asyncio.to_thread(fn, request)

    async def _dispatch(
        self,
        tree: ReasoningTree,
        calls: Sequence[tuple[Callable[[BackendRequest], BackendReply], BackendRequest]],
    ) -> list[CallResult]:
        """Run calls concurrently; results come back in submission order."""
        if not calls:
            return []
        tree.backend_calls += len(calls)
        results = await asyncio.gather(*(self._call(fn, req) for fn, req in calls), return_exceptions=True)
        for result in results:
            if isinstance(result, BaseException) and not isinstance(
                result, BACKEND_FAILURES + (ConstraintExhaustedError,)
            ):
                raise result
        return list(results)

    def _mark_failed(self, node: ReasoningNode, stage: str, error: Exception) -> None:
        node.failed = True
        node.flags.append(f"{stage}_failed")
        logger.warning(f"Node {node.node_id} {stage} failed: {error}")

    # --- operations ------------------------------------------------------------

    async def expand_nodes(self, tree: ReasoningTree, node_ids: Sequence[int]) -> dict[int, list[int]]:
        """
        Ask for sub-questions for each node and add up to ``branching_limit``
        children per node. Returns parent id -> new child ids.
        """
        template = self.registry.subquestion_template(self.config.demo_flavor)
        calls = []
        for node_id in node_ids:
            node = tree.node(node_id)
            if node.status not in (NodeStatus.OPEN, NodeStatus.ANSWERED) or node.children:
                raise PreconditionError(f"node {node_id} cannot be expanded (status {node.status.value})")
            if node.depth >= self.config.max_depth:
                raise PreconditionError(f"node {node_id} is at max depth {self.config.max_depth}")
            text = template.render({
                "question": node.question_text,
                "context": render_chain(tree.qa_chain(node_id)),
            })
            request = self._request(text)
            node.prompt_digests.append(request.digest)
            calls.append((self.backend.generate, request))

        results = await self._dispatch(tree, calls)
        created: dict[int, list[int]] = {}
        for node_id, result in zip(node_ids, results):
            node = tree.node(node_id)
            if isinstance(result, Exception):
                self._mark_failed(node, "expand", result)
                created[node_id] = []
                continue
            questions = parse_subquestions(result.text)
            if len(questions) > self.config.branching_limit:
                logger.debug(f"Node {node_id}: keeping {self.config.branching_limit} of {len(questions)} sub-questions")
            created[node_id] = [
                tree.add_child(node_id, q).node_id for q in questions[: self.config.branching_limit]
            ]
            logger.debug(f"Node {node_id}: {len(created[node_id])} sub-questions")
        return created

    async def prune_paraphrases(self, tree: ReasoningTree, child_ids: Sequence[int]) -> list[int]:
        """
        Drop children that only restate a question already on their path.
        Exact repeats are pruned without a backend call; parse failures keep
        the child.
        """
        survivors: dict[int, bool] = {}
        pending: list[int] = []
        calls = []
        template = self.registry.get(TemplateName.PARAPHRASE_CHECK)

        for child_id in child_ids:
            child = tree.node(child_id)
            if child.status != NodeStatus.OPEN:
                raise PreconditionError(f"node {child_id} is not open")
            previous = tree.ancestors(child_id)
            if not self.config.prune_against_ancestors:
                previous = previous[-1:]
            questions = [n.question_text for n in previous]
            if any(_same_question(child.question_text, q) for q in questions):
                child.status = NodeStatus.PRUNED
                child.flags.append("exact_repeat")
                survivors[child_id] = False
                continue
            request = self._request(
                template.render({"question": child.question_text, "previous_questions": render_question_list(questions)})
            )
            child.prompt_digests.append(request.digest)
            pending.append(child_id)
            calls.append((self.backend.generate, request))

        results = await self._dispatch(tree, calls)
        for child_id, result in zip(pending, results):
            child = tree.node(child_id)
            if isinstance(result, Exception):
                self._mark_failed(child, "paraphrase_check", result)
                survivors[child_id] = True
                continue
            verdict = parse_yes_no(result.text)
            if not verdict.ok:
                child.flags.append("paraphrase_unparsed")
            if verdict.unwrap_or(False):
                child.status = NodeStatus.PRUNED
                survivors[child_id] = False
            else:
                survivors[child_id] = True

        return [c for c in child_ids if survivors[c]]

    def _answer_request(self, tree: ReasoningTree, example: QAExample, node: ReasoningNode, bank: VocabularyBank) -> BackendRequest:
        mode = self.config.constraint_mode
        evidence = render_evidence(example.evidence_pool)
        if mode == ConstraintMode.OFF:
            text = self.registry.render(TemplateName.PLAIN_ANSWER, {"question": node.question_text, "evidence": evidence})
        else:
            text = self.registry.render(
                TemplateName.CONSTRAINED_ANSWER,
                {"question": node.question_text, "evidence": evidence, "vocabulary": render_bank(bank)},
            )
        if mode != ConstraintMode.HARD:
            text += self.registry.render(TemplateName.READINESS_SUFFIX, {"root_question": tree.root.question_text})
        return self._request(text, constraint=None if mode == ConstraintMode.OFF else bank)

    def _answer_fn(self) -> Callable[[BackendRequest], BackendReply]:
        mode = self.config.constraint_mode
        if mode == ConstraintMode.HARD:
            return self.backend.generate_constrained
        if mode == ConstraintMode.SOFT:
            return lambda request: generate_prompt_constrained(self.backend, request, self.registry)
        return self.backend.generate

    def _soft_fallback(self, request: BackendRequest) -> BackendReply:
        return generate_prompt_constrained(self.backend, request, self.registry)

    async def answer_subquestions(
        self,
        tree: ReasoningTree,
        example: QAExample,
        node_ids: Sequence[int],
        bank: VocabularyBank,
    ) -> dict[int, Optional[str]]:
        """
        Answer open nodes. Already answered nodes return their stored answer
        without a call. In hard mode an exhausted constraint falls back to
        the prompt-constrained path for that node.
        """
        answers: dict[int, Optional[str]] = {}
        pending: list[int] = []
        requests: list[BackendRequest] = []
        fn = self._answer_fn()

        for node_id in node_ids:
            node = tree.node(node_id)
            if node.answer_text is not None:
                answers[node_id] = node.answer_text
                continue
            if node.status != NodeStatus.OPEN:
                raise PreconditionError(f"node {node_id} is not open")
            request = self._answer_request(tree, example, node, bank)
            node.prompt_digests.append(request.digest)
            pending.append(node_id)
            requests.append(request)

        results = await self._dispatch(tree, [(fn, r) for r in requests])

        retry = [i for i, r in enumerate(results) if isinstance(r, ConstraintExhaustedError)]
        if retry:
            for i in retry:
                node = tree.node(pending[i])
                node.flags.append("hard_fallback")
                logger.warning(f"Node {node.node_id}: constraint exhausted, falling back to prompt-constrained answer")
            fallback = await self._dispatch(tree, [(self._soft_fallback, requests[i]) for i in retry])
            for i, result in zip(retry, fallback):
                results[i] = result

        for node_id, result in zip(pending, results):
            node = tree.node(node_id)
            if isinstance(result, Exception):
                self._mark_failed(node, "answer", result)
                node.status = NodeStatus.PRUNED
                answers[node_id] = None
                continue
            if result.violations:
                node.flags.append("out_of_bank")
            node.answer_text = direct_answer(result.text)
            node.ready = parse_readiness(result.text).unwrap_or(False)
            node.status = NodeStatus.ANSWERED
            answers[node_id] = node.answer_text

        if self.config.constraint_mode == ConstraintMode.HARD:
            await self.check_readiness(tree, [n for n in pending if answers[n] is not None])
        return answers

    async def check_readiness(self, tree: ReasoningTree, node_ids: Sequence[int]) -> None:
        """
        Unconstrained yes/no call asking whether the original question can be
        answered yet. Used when the answer itself was decoded under a token
        mask and cannot carry the readiness line. Nodes already at max depth
        are skipped.
        """
        template = self.registry.get(TemplateName.READINESS_CHECK)
        targets = [n for n in node_ids if tree.node(n).depth < self.config.max_depth]
        calls = []
        for node_id in targets:
            request = self._request(
                template.render({
                    "root_question": tree.root.question_text,
                    "context": render_chain(tree.qa_chain(node_id)),
                })
            )
            tree.node(node_id).prompt_digests.append(request.digest)
            calls.append((self.backend.generate, request))

        results = await self._dispatch(tree, calls)
        for node_id, result in zip(targets, results):
            node = tree.node(node_id)
            if isinstance(result, Exception):
                self._mark_failed(node, "readiness", result)
                continue
            verdict = parse_yes_no(result.text)
            if not verdict.ok:
                node.flags.append("readiness_unparsed")
            node.ready = verdict.unwrap_or(False)

    async def estimate_validity(self, tree: ReasoningTree, example: QAExample, sibling_ids: Sequence[int]) -> dict[int, float]:
        """One validity call per answered sibling; unparseable replies get the default."""
        parents = {tree.node(s).parent for s in sibling_ids}
        if len(parents) > 1:
            raise PreconditionError("validity is estimated per sibling group (one parent)")
        template = self.registry.get(TemplateName.VALIDITY_ESTIMATE)
        evidence = render_evidence(example.evidence_pool)

        calls = []
        for node_id in sibling_ids:
            node = tree.node(node_id)
            if node.status != NodeStatus.ANSWERED:
                raise PreconditionError(f"node {node_id} has not been answered")
            parent = tree.node(node.parent)
            request = self._request(
                template.render({
                    "root_question": tree.root.question_text,
                    "parent_question": parent.question_text,
                    "question": node.question_text,
                    "answer": node.answer_text or "",
                    "evidence": evidence,
                })
            )
            node.prompt_digests.append(request.digest)
            calls.append((self.backend.generate, request))

        results = await self._dispatch(tree, calls)
        scores: dict[int, float] = {}
        for node_id, result in zip(sibling_ids, results):
            node = tree.node(node_id)
            if isinstance(result, Exception):
                self._mark_failed(node, "validity", result)
                value = self.config.validity_default
            else:
                parsed = parse_probability(result.text)
                for warning in parsed.warnings:
                    logger.warning(f"Node {node_id}: {warning}")
                if not parsed.ok:
                    logger.warning(f"Node {node_id}: unparseable probability, using {self.config.validity_default}")
                    node.flags.append("validity_default")
                value = parsed.unwrap_or(self.config.validity_default)
            node.validity = value
            scores[node_id] = value
        return scores

    async def finalize_leaves(
        self,
        tree: ReasoningTree,
        example: QAExample,
        node_ids: Sequence[int],
        bank: VocabularyBank,
    ) -> dict[int, Optional[str]]:
        """Answer the original question from each candidate leaf's chain."""
        mode = self.config.constraint_mode
        evidence = render_evidence(example.evidence_pool)
        fn = self._answer_fn()
        requests = []
        for node_id in node_ids:
            if tree.surviving_children(node_id):
                raise PreconditionError(f"node {node_id} has surviving children and is not a leaf candidate")
            bindings = {
                "question": tree.root.question_text,
                "chain": render_chain(tree.qa_chain(node_id)),
                "evidence": evidence,
            }
            if mode == ConstraintMode.OFF:
                text = self.registry.render(TemplateName.FINAL_ANSWER_OPEN, bindings)
                request = self._request(text)
            else:
                bindings["vocabulary"] = render_bank(bank)
                text = self.registry.render(TemplateName.FINAL_ANSWER, bindings)
                request = self._request(text, constraint=bank)
            tree.node(node_id).prompt_digests.append(request.digest)
            requests.append(request)

        results = await self._dispatch(tree, [(fn, r) for r in requests])
        retry = [i for i, r in enumerate(results) if isinstance(r, ConstraintExhaustedError)]
        if retry:
            for i in retry:
                tree.node(node_ids[i]).flags.append("hard_fallback")
            fallback = await self._dispatch(tree, [(self._soft_fallback, requests[i]) for i in retry])
            for i, result in zip(retry, fallback):
                results[i] = result

        finals: dict[int, Optional[str]] = {}
        for node_id, result in zip(node_ids, results):
            node = tree.node(node_id)
            if isinstance(result, Exception):
                self._mark_failed(node, "finalize", result)
                finals[node_id] = None
                continue
            if result.violations:
                node.flags.append("out_of_bank")
            node.final_answer = direct_answer(result.text)
            node.status = NodeStatus.LEAF
            finals[node_id] = node.final_answer
        return finals

    # --- main loop -------------------------------------------------------------

    async def _grow(self, tree: ReasoningTree, example: QAExample, bank: VocabularyBank) -> list[int]:
        """Build the tree level by level. Returns candidate leaf ids, ascending."""
        candidates: set[int] = set()
        frontier = [tree.root_id]

        while frontier:
            expandable = [n for n in frontier if tree.node(n).depth < self.config.max_depth]
            candidates.update(n for n in frontier if n not in expandable)

            created = await self.expand_nodes(tree, expandable)
            new_children = [c for parent in expandable for c in created[parent]]
            survivors = await self.prune_paraphrases(tree, new_children)
            await self.answer_subquestions(tree, example, survivors, bank)

            groups: dict[int, list[int]] = {}
            for child_id in survivors:
                child = tree.node(child_id)
                if child.status == NodeStatus.ANSWERED:
                    groups.setdefault(child.parent, []).append(child_id)
            for parent_id in sorted(groups):
                await self.estimate_validity(tree, example, groups[parent_id])

            next_frontier = []
            for parent_id in expandable:
                if not tree.surviving_children(parent_id):
                    candidates.add(parent_id)
            for parent_id in sorted(groups):
                for child_id in groups[parent_id]:
                    child = tree.node(child_id)
                    if child.ready or child.depth >= self.config.max_depth:
                        candidates.add(child_id)
                    else:
                        next_frontier.append(child_id)
            frontier = sorted(next_frontier)

        return sorted(candidates)

    async def _run(self, tree: ReasoningTree, example: QAExample) -> tuple[str, PathScore]:
        bank = build_bank(example.question, example.evidence_pool, self.stoplist, source_question_id=example.id)
        candidates = await self._grow(tree, example, bank)
        await self.finalize_leaves(tree, example, candidates, bank)

        tree.check_invariants()
        rate = tree.failure_rate()
        if rate > FAILURE_RATE_LIMIT:
            raise EngineFailureError(
                f"{example.id}: backend failures on {rate:.0%} of nodes", tree=tree
            )
        return select_answer(tree)

    async def run(self, example: QAExample) -> tuple[str, ReasoningTree, PathScore]:
        tree = ReasoningTree.start(example.id, example.question)
        try:
            if self.config.budget_seconds is not None:
                answer, score = await asyncio.wait_for(self._run(tree, example), self.config.budget_seconds)
            else:
                answer, score = await self._run(tree, example)
        except asyncio.TimeoutError:
            raise EngineFailureError(
                f"{example.id}: exceeded the {self.config.budget_seconds:.0f}s example budget", tree=tree
            ) from None
        except EngineFailureError as e:
            if e.tree is None:
                e.tree = tree
            raise
        return answer, tree, score


async def run_stoctot(
    example: QAExample,
    backend: Backend,
    config: Optional[EngineConfig] = None,
    **engine_kwargs,
) -> tuple[str, ReasoningTree, PathScore]:
    """Run the full reasoning tree for one example."""
    return await StocTotEngine(backend, config, **engine_kwargs).run(example)


def outcome_from_tree(example: QAExample, answer: str, tree: ReasoningTree, score: Optional[PathScore]) -> StrategyOutcome:
    flags = sorted({flag for node in tree.nodes.values() for flag in node.flags})
    return StrategyOutcome(
        example_id=example.id,
        strategy=Strategy.STOCTOT,
        answer=answer,
        trace=tree,
        backend_calls=tree.backend_calls,
        failed=False,
        intermediate_answers=tuple(tree.intermediate_answers()),
        flags=tuple(flags),
    )

"""
Batch jobs: run, resume, compare, eval.

One run executes a single strategy over a sampled corpus. Examples run as
concurrent tasks that share one semaphore over backend calls. Finished
outcomes are pushed onto a queue drained by a single writer task, which
is the only code that touches per-example files in the run directory.
Records and reports are built from the persisted outcomes in corpus order,
so a resumed run produces the same files as an uninterrupted one.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd

from apps.runner.adapters import Backend, RecordingBackend, build_backend
from apps.runner.jobs.baselines import run_cot, run_tot, run_vanilla
from apps.runner.jobs.stoctot import EngineConfig, StocTotEngine, outcome_from_tree
from packages.core.analytics.metrics import score_outcome, score_prediction
from packages.core.analytics.report import (
    RunReport,
    aggregate,
    compare_reports,
    render_report_table,
    write_records_csv,
)
from packages.core.corpus import apply_reasoning_labels, load_corpus, load_reasoning_labels, sample_subset
from packages.core.errors import EngineFailureError, PreconditionError
from packages.core.models import Corpus, Dataset, EvalRecord, QAExample, Strategy, StrategyOutcome
from packages.core.prompts.templates import TemplateRegistry
from packages.core.reasoning.tree import ReasoningTree
from packages.core.run_config import BackendKind, RunConfig
from packages.core.settings import settings
from packages.core.storage.run_store import (
    FIXTURES_FILE,
    MANIFEST_FILE,
    RECORDS_CSV,
    REPORT_JSON,
    REPORT_TXT,
    RunStore,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class BatchResult:
    run_dir: Path
    report: RunReport
    records: list[EvalRecord]
    executed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def failed_ids(self) -> list[str]:
        return list(self.report.failed_ids)

    @property
    def exit_code(self) -> int:
        return 1 if self.report.failed_ids else 0


# =============================================================================
# Corpus selection
# =============================================================================

def select_examples(config: RunConfig) -> Corpus:
    """Load, label and sample the corpus a run works on."""
    corpus = load_corpus(config.dataset_path, config.dataset)
    if config.labels_path:
        corpus = apply_reasoning_labels(corpus, load_reasoning_labels(config.labels_path))
    if config.sample_n is None:
        return corpus
    return sample_subset(corpus, config.sample_n, config.seed)


# =============================================================================
# Per-example execution
# =============================================================================

class StrategyRunner:
    """Runs the configured strategy on one example and never raises for backend trouble."""

    def __init__(self, config: RunConfig, backend: Backend, semaphore: asyncio.Semaphore):
        self.config = config
        self.backend = backend
        self.semaphore = semaphore
        self.registry = TemplateRegistry(config.template_dir)
        budget = config.example_budget_seconds or settings.example_budget_seconds
        self.engine = StocTotEngine(
            backend,
            EngineConfig.from_run_config(config, budget_seconds=budget),
            registry=self.registry,
            semaphore=semaphore,
        )

    async def run(self, example: QAExample) -> StrategyOutcome:
        strategy = self.config.strategy
        params = self.config.generation_params
        try:
            if strategy == Strategy.STOCTOT:
                return await self._run_stoctot(example)
            if strategy == Strategy.VANILLA:
                return await run_vanilla(example, self.backend, params, self.registry, self.semaphore)
            if strategy == Strategy.COT:
                return await run_cot(example, self.backend, params, self.registry, self.semaphore)
            return await run_tot(example, self.backend, self.config.n_paths, params, self.registry, self.semaphore)
        except Exception as e:
            logger.exception(f"{strategy.value} crashed on {example.id}")
            return StrategyOutcome(
                example_id=example.id,
                strategy=strategy,
                failed=True,
                failure_reason=f"{type(e).__name__}: {e}",
            )

    async def _run_stoctot(self, example: QAExample) -> StrategyOutcome:
        try:
            answer, tree, score = await self.engine.run(example)
        except EngineFailureError as e:
            logger.warning(f"stoctot failed on {example.id}: {e}")
            tree = e.tree
            return StrategyOutcome(
                example_id=example.id,
                strategy=Strategy.STOCTOT,
                trace=tree,
                backend_calls=tree.backend_calls if tree is not None else 0,
                failed=True,
                failure_reason=str(e),
                intermediate_answers=tuple(tree.intermediate_answers()) if tree is not None else (),
            )
        return outcome_from_tree(example, answer, tree, score)


async def _writer(store: RunStore, queue: asyncio.Queue) -> None:
    """Single consumer of finished outcomes."""
    while True:
        outcome: Optional[StrategyOutcome] = await queue.get()
        try:
            if outcome is None:
                return
            if isinstance(outcome.trace, ReasoningTree):
                store.write_json(store.tree_path(outcome.example_id), outcome.trace.to_json())
            elif outcome.trace is not None:
                store.write_json(store.trace_path(outcome.example_id), outcome.trace)
            store.write_outcome(outcome)
        finally:
            queue.task_done()


async def execute_examples(
    config: RunConfig,
    store: RunStore,
    examples: Sequence[QAExample],
    backend: Backend,
) -> list[StrategyOutcome]:
    """Run ``examples`` concurrently and persist each outcome as it finishes."""
    semaphore = asyncio.Semaphore(config.concurrency)
    runner = StrategyRunner(config, backend, semaphore)
    queue: asyncio.Queue = asyncio.Queue()
    writer = asyncio.create_task(_writer(store, queue))

    async def one(example: QAExample) -> StrategyOutcome:
        outcome = await runner.run(example)
        await queue.put(outcome)
        status = "FAILED" if outcome.failed else "ok"
        logger.info(f"{example.id}: {config.strategy.value} {status} ({outcome.backend_calls} calls)")
        return outcome

    try:
        outcomes = await asyncio.gather(*(one(ex) for ex in examples))
    finally:
        await queue.put(None)
        await writer
    return list(outcomes)


# =============================================================================
# Finalization
# =============================================================================

def _file_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fixture_digests(config: RunConfig, store: RunStore, backend: Backend) -> dict[str, str]:
    if isinstance(backend, RecordingBackend):
        backend.store.save(store.path(FIXTURES_FILE))
        return {FIXTURES_FILE: backend.store.content_digest()}
    if config.backend == BackendKind.SCRIPTED and config.fixtures_path:
        return {Path(config.fixtures_path).name: _file_digest(config.fixtures_path)}
    return {}


def finalize_run(
    config: RunConfig,
    store: RunStore,
    corpus: Corpus,
    backend: Optional[Backend] = None,
) -> tuple[RunReport, list[EvalRecord]]:
    """Score every persisted outcome in corpus order and write records, report and manifest."""
    missing = [ex.id for ex in corpus.examples if not store.has_outcome(ex.id)]
    if missing:
        raise PreconditionError(f"{len(missing)} example(s) have no stored outcome, e.g. {missing[0]!r}")

    records = [
        score_outcome(ex, store.load_outcome(ex.id), config.yes_no_special_case)
        for ex in corpus.examples
    ]
    report = aggregate(records)

    store.write_records(records)
    write_records_csv(records, store.path(RECORDS_CSV))
    store.write_json(store.path(REPORT_JSON), report.model_dump(mode="json"))
    store.write_json(store.path(REPORT_TXT), render_report_table(report))

    fixture_digests = _fixture_digests(config, store, backend) if backend is not None else {}
    store.finalize_manifest(config, fixture_digests)
    return report, records


# =============================================================================
# Jobs
# =============================================================================

async def _run_pending(
    config: RunConfig,
    store: RunStore,
    backend: Optional[Backend],
    skip: set[str],
) -> BatchResult:
    corpus = select_examples(config)
    pending = [ex for ex in corpus.examples if ex.id not in skip]
    skipped = [ex.id for ex in corpus.examples if ex.id in skip]
    if skipped:
        logger.info(f"Skipping {len(skipped)} example(s) with stored outcomes")

    owned = backend is None
    backend = backend or build_backend(config, fixtures_out=store.path(FIXTURES_FILE))
    logger.info(
        f"Running {config.strategy.value} on {len(pending)} example(s) "
        f"[backend={config.backend.value}, concurrency={config.concurrency}, run={store.run_dir}]"
    )
    try:
        await execute_examples(config, store, pending, backend)
        report, records = finalize_run(config, store, corpus, backend)
    finally:
        if owned:
            backend.close()

    logger.info(
        f"Run complete: EM {report.em:.2f} F1 {report.f1:.2f} over {report.n} examples, "
        f"{len(report.failed_ids)} failed, {report.backend_calls} backend calls"
    )
    return BatchResult(
        run_dir=store.run_dir,
        report=report,
        records=records,
        executed=[ex.id for ex in pending],
        skipped=skipped,
    )


async def run_batch(config: RunConfig, backend: Optional[Backend] = None) -> BatchResult:
    """
    Execute a full run for ``config``.

    The run directory is ``config.run_dir``. An existing directory for the
    same config is rerun from scratch; use ``resume`` to keep stored outcomes.
    """
    store = RunStore(config.run_dir)
    if store.path(MANIFEST_FILE).exists():
        store.verify(config)
    store.initialize(config)
    return await _run_pending(config, store, backend, skip=set())


async def resume(
    run_dir: PathLike,
    backend: Optional[Backend] = None,
    config: Optional[RunConfig] = None,
) -> BatchResult:
    """
    Finish an interrupted run. Examples with a stored successful outcome
    are skipped; failed ones are executed again.

    Raises ``RunDigestMismatchError`` when the stored manifest and config
    disagree.
    """
    store = RunStore(run_dir)
    config = config or store.load_config()
    store.verify(config)

    done = set()
    for example_id in sorted(store.completed_ids()):
        if not store.load_outcome(example_id).failed:
            done.add(example_id)
    return await _run_pending(config, store, backend, skip=done)


def compare(run_dirs: Sequence[PathLike]) -> pd.DataFrame:
    """Side-by-side table of completed runs; the first run is the baseline for deltas."""
    if len(run_dirs) < 2:
        raise PreconditionError("compare needs at least two run directories")
    labels = [Path(d).name for d in run_dirs]
    record_sets = [RunStore(d).load_records() for d in run_dirs]
    return compare_reports(labels, record_sets)


def load_predictions(path: PathLike) -> dict[str, str]:
    """Read a ``{example_id: prediction}`` JSON object."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(payload, dict) and isinstance(payload.get("answer"), dict):
        payload = payload["answer"]
    if not isinstance(payload, dict):
        raise PreconditionError(f"{path}: expected a JSON object of id -> prediction")
    return {str(k): "" if v is None else str(v) for k, v in payload.items()}


def eval_predictions(
    dataset_path: PathLike,
    dataset: Dataset,
    predictions_path: PathLike,
    strategy: Strategy = Strategy.VANILLA,
    yes_no_special_case: bool = True,
) -> tuple[RunReport, list[EvalRecord]]:
    """
    Score an external predictions file against every example of a dataset.

    Examples without a prediction score as no answer, matching the
    official evaluation script.
    """
    corpus = load_corpus(dataset_path, dataset)
    predictions = load_predictions(predictions_path)

    unknown = sorted(set(predictions) - set(corpus.ids))
    if unknown:
        logger.warning(f"{len(unknown)} prediction id(s) are not in the dataset, e.g. {unknown[0]!r}")

    records = []
    for example in corpus.examples:
        if example.id not in predictions:
            logger.warning(f"missing prediction for {example.id}")
        records.append(
            score_prediction(
                example,
                predictions.get(example.id, ""),
                strategy,
                failed=example.id not in predictions,
                yes_no_special_case=yes_no_special_case,
            )
        )
    return aggregate(records), records


def dump_tree(run_dir: PathLike, example_id: str) -> str:
    return RunStore(run_dir).read_tree(example_id)

"""
Dataset loaders for the distractor setting.

Supported inputs:
- HotpotQA distractor JSON: a list of records with ``_id``, ``question``, ``answer``,
  ``type`` and ``context`` ([title, [sentence, ...]] pairs).
- MuSiQue answerable JSONL: one record per line with ``id``, ``question``, ``answer``,
  ``paragraphs`` ([{title, paragraph_text}, ...]) and optionally
  ``question_decomposition``, ``answer_aliases`` and ``answerable``.

Both loaders preserve file order exactly.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import ValidationError

from packages.core.errors import CorpusParseError, CorpusSchemaError
from packages.core.models import (
    Corpus,
    Dataset,
    EvidencePassage,
    QAExample,
    QuestionType,
    ReasoningType,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

HOTPOT_REQUIRED_KEYS = ("_id", "question", "answer", "type", "context")
MUSIQUE_REQUIRED_KEYS = ("id", "question", "answer", "paragraphs")

# HotpotQA questions are two-hop by construction.
HOTPOT_HOP_COUNT = 2

_HOP_PREFIX = re.compile(r"^(\d+)hop")

_QUESTION_TYPES = {
    "bridge": QuestionType.BRIDGE,
    "comparison": QuestionType.COMPARISON,
}


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


def _read_text(path: Path) -> str:
    raw = path.read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise CorpusParseError(str(path), "invalid UTF-8", byte_offset=e.start) from e


def _require(record: Any, keys: tuple[str, ...], path: Path, index: int) -> None:
    if not isinstance(record, dict):
        raise CorpusSchemaError(str(path), index, "<record>", "record is not a JSON object")
    for key in keys:
        if key not in record:
            raise CorpusSchemaError(str(path), index, key)


def _hotpot_passages(context: Any, path: Path, index: int) -> tuple[EvidencePassage, ...]:
    if not isinstance(context, list):
        raise CorpusSchemaError(str(path), index, "context", "expected a list of [title, sentences] pairs")
    passages = []
    for entry in context:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise CorpusSchemaError(str(path), index, "context", "expected [title, sentences] pairs")
        title, sentences = entry
        if isinstance(sentences, str):
            sentences = [sentences]
        try:
            passages.append(EvidencePassage(title=str(title), sentences=tuple(str(s) for s in sentences)))
        except ValidationError as e:
            raise CorpusSchemaError(str(path), index, "context", str(e.errors()[0]["msg"])) from e
    return tuple(passages)


def _build_example(path: Path, index: int, key: str, **fields: Any) -> QAExample:
    try:
        return QAExample(**fields)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in first.get("loc", ())) or key
        raise CorpusSchemaError(str(path), index, loc, first["msg"]) from e


def load_hotpotqa(path: PathLike) -> Corpus:
    """Load a HotpotQA distractor JSON file into a ``Corpus``."""
    path = Path(path)
    text = _read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorpusParseError(str(path), e.msg, byte_offset=_byte_offset(text, e.pos)) from e

    if not isinstance(data, list):
        raise CorpusSchemaError(str(path), 0, "<top-level>", "expected a JSON list of records")

    examples = []
    for index, record in enumerate(data):
        _require(record, HOTPOT_REQUIRED_KEYS, path, index)
        examples.append(
            _build_example(
                path,
                index,
                "_id",
                id=str(record["_id"]),
                question=str(record["question"]),
                gold_answer=str(record["answer"]),
                question_type=_QUESTION_TYPES.get(str(record["type"]).lower(), QuestionType.UNKNOWN),
                hop_count=HOTPOT_HOP_COUNT,
                evidence_pool=_hotpot_passages(record["context"], path, index),
                reasoning_type=ReasoningType.UNLABELED,
            )
        )

    logger.info(f"Loaded {len(examples)} HotpotQA examples from {path}")
    return Corpus(dataset=Dataset.HOTPOTQA, examples=tuple(examples))


def musique_hop_count(record_id: str, decomposition: Any = None) -> Optional[int]:
    """
    Hop count from the id prefix ("2hop__...", "3hop1__...") or,
    failing that, from the number of decomposition steps.

    Returns None when neither source gives a count of at least 2.
    """
    match = _HOP_PREFIX.match(record_id)
    if match:
        hops = int(match.group(1))
        if hops >= 2:
            return hops
    if isinstance(decomposition, list) and len(decomposition) >= 2:
        return len(decomposition)
    return None


def _musique_passages(paragraphs: Any, path: Path, line_no: int) -> tuple[EvidencePassage, ...]:
    if not isinstance(paragraphs, list):
        raise CorpusSchemaError(str(path), line_no, "paragraphs", "expected a list")
    passages = []
    for paragraph in paragraphs:
        if not isinstance(paragraph, dict) or "title" not in paragraph or "paragraph_text" not in paragraph:
            raise CorpusSchemaError(str(path), line_no, "paragraphs", "each paragraph needs title and paragraph_text")
        try:
            passages.append(
                EvidencePassage(
                    title=str(paragraph["title"]),
                    sentences=(str(paragraph["paragraph_text"]),),
                )
            )
        except ValidationError as e:
            raise CorpusSchemaError(str(path), line_no, "paragraphs", str(e.errors()[0]["msg"])) from e
    return tuple(passages)


def load_musique(path: PathLike) -> Corpus:
    """
    Load a MuSiQue JSONL file into a ``Corpus``.

    Records flagged ``"answerable": false`` are skipped. Errors cite the
    1-based line number.
    """
    path = Path(path)
    text = _read_text(path)

    examples = []
    skipped = 0
    offset = 0
    for line_no, line in enumerate(text.splitlines(keepends=True), start=1):
        line_start = offset
        offset += len(line.encode("utf-8"))
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusParseError(
                str(path),
                e.msg,
                byte_offset=line_start + _byte_offset(line, e.pos),
                line=line_no,
            ) from e

        _require(record, MUSIQUE_REQUIRED_KEYS, path, line_no)
        if record.get("answerable") is False:
            skipped += 1
            continue

        aliases = record.get("answer_aliases") or []
        record_id = str(record["id"])
        examples.append(
            _build_example(
                path,
                line_no,
                "id",
                id=record_id,
                question=str(record["question"]),
                gold_answer=str(record["answer"]),
                answer_aliases=tuple(str(a) for a in aliases),
                question_type=QuestionType.UNKNOWN,
                hop_count=musique_hop_count(record_id, record.get("question_decomposition")),
                evidence_pool=_musique_passages(record["paragraphs"], path, line_no),
                reasoning_type=ReasoningType.UNLABELED,
            )
        )

    if skipped:
        logger.info(f"Skipped {skipped} unanswerable MuSiQue records in {path}")
    logger.info(f"Loaded {len(examples)} MuSiQue examples from {path}")
    return Corpus(dataset=Dataset.MUSIQUE, examples=tuple(examples))


def load_corpus(path: PathLike, dataset: Dataset) -> Corpus:
    if dataset == Dataset.HOTPOTQA:
        return load_hotpotqa(path)
    return load_musique(path)


def dump_corpus(corpus: Corpus, path: PathLike) -> None:
    """Write a corpus back in its source format (JSON list or JSONL)."""
    path = Path(path)
    if corpus.dataset == Dataset.HOTPOTQA:
        records = [
            {
                "_id": ex.id,
                "question": ex.question,
                "answer": ex.gold_answer,
                "type": ex.question_type.value,
                "context": [[p.title, list(p.sentences)] for p in ex.evidence_pool],
            }
            for ex in corpus.examples
        ]
        path.write_text(json.dumps(records, ensure_ascii=False, indent=1), encoding="utf-8")
        return

    lines = []
    for ex in corpus.examples:
        record: dict[str, Any] = {
            "id": ex.id,
            "question": ex.question,
            "answer": ex.gold_answer,
            "answer_aliases": list(ex.answer_aliases),
            "answerable": True,
            "paragraphs": [
                {"idx": i, "title": p.title, "paragraph_text": p.text}
                for i, p in enumerate(ex.evidence_pool)
            ],
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# =============================================================================
# Reasoning-type sidecar labels
# =============================================================================

_LABELS = {
    "sequential": ReasoningType.SEQUENTIAL,
    "parallel": ReasoningType.PARALLEL,
}


def load_reasoning_labels(path: PathLike) -> dict[str, ReasoningType]:
    """Load a JSON object mapping example id -> "sequential" | "parallel"."""
    path = Path(path)
    text = _read_text(path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorpusParseError(str(path), e.msg, byte_offset=_byte_offset(text, e.pos)) from e
    if not isinstance(payload, dict):
        raise CorpusSchemaError(str(path), 0, "<top-level>", "expected an object of id -> label")

    labels = {}
    for index, (example_id, label) in enumerate(payload.items()):
        value = _LABELS.get(str(label).strip().lower())
        if value is None:
            raise CorpusSchemaError(str(path), index, str(example_id), f"unknown reasoning label {label!r}")
        labels[str(example_id)] = value
    return labels


def apply_reasoning_labels(corpus: Corpus, labels: dict[str, ReasoningType]) -> Corpus:
    """Return a corpus whose examples carry the sidecar reasoning labels."""
    known = set(corpus.ids)
    unknown = sorted(set(labels) - known)
    if unknown:
        logger.warning(f"{len(unknown)} reasoning labels refer to ids not in the corpus (ignored)")

    examples = tuple(
        ex.model_copy(update={"reasoning_type": labels[ex.id]}) if ex.id in labels else ex
        for ex in corpus.examples
    )
    return Corpus(dataset=corpus.dataset, examples=examples)

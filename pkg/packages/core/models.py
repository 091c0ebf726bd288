"""
Pydantic models for questions, evidence, backend traffic and evaluation records.
Used for validation and serialization throughout the application.
"""

from __future__ import annotations

import hashlib
import json
from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Dataset(str, Enum):
    """Supported benchmark datasets."""
    HOTPOTQA = "hotpotqa"
    MUSIQUE = "musique"


class QuestionType(str, Enum):
    BRIDGE = "bridge"
    COMPARISON = "comparison"
    UNKNOWN = "unknown"


class ReasoningType(str, Enum):
    SEQUENTIAL = "sequential"
    PARALLEL = "parallel"
    UNLABELED = "unlabeled"


class Strategy(str, Enum):
    """Prompting strategies that can be run and compared."""
    VANILLA = "vanilla"
    COT = "cot"
    TOT = "tot"
    STOCTOT = "stoctot"


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


class ErrorCategory(str, Enum):
    """Per-record outcome buckets used by the error analysis."""
    CORRECT = "correct"
    SEMANTICALLY_CORRECT = "semantically_correct"
    WRONG_ANSWER = "wrong_answer"
    INTERMEDIATE_ANSWER = "intermediate_answer"
    NO_ANSWER = "no_answer"


# =============================================================================
# Corpus Models
# =============================================================================

class EvidencePassage(BaseModel):
    """One titled passage from the distractor evidence pool."""
    model_config = ConfigDict(frozen=True)

    title: str = Field(..., min_length=1)
    sentences: tuple[str, ...] = Field(..., min_length=1)

    @property
    def text(self) -> str:
        return " ".join(s.strip() for s in self.sentences if s.strip())


class QAExample(BaseModel):
    """A multi-hop question with its gold answer and evidence pool."""
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    question: str = Field(..., min_length=1)
    gold_answer: str = Field(..., min_length=1)
    answer_aliases: tuple[str, ...] = ()
    question_type: QuestionType = QuestionType.UNKNOWN
    hop_count: Optional[int] = Field(default=None, ge=2)
    evidence_pool: tuple[EvidencePassage, ...] = Field(..., min_length=1)
    reasoning_type: ReasoningType = ReasoningType.UNLABELED

    @field_validator("question", "gold_answer")
    @classmethod
    def validate_not_blank(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("must not be blank")
        return v

    @property
    def gold_answers(self) -> tuple[str, ...]:
        """Gold answer followed by any aliases."""
        return (self.gold_answer, *self.answer_aliases)


class Corpus(BaseModel):
    """An ordered collection of examples from one dataset."""
    model_config = ConfigDict(frozen=True)

    dataset: Dataset
    examples: tuple[QAExample, ...] = ()

    @model_validator(mode="after")
    def validate_unique_ids(self) -> "Corpus":
        seen: set[str] = set()
        for example in self.examples:
            if example.id in seen:
                raise ValueError(f"duplicate example id {example.id!r}")
            seen.add(example.id)
        return self

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def ids(self) -> list[str]:
        return [example.id for example in self.examples]

    def by_id(self, example_id: str) -> QAExample:
        for example in self.examples:
            if example.id == example_id:
                return example
        raise KeyError(example_id)


# =============================================================================
# Vocabulary Bank
# =============================================================================

class VocabularyBank(BaseModel):
    """Normalized word set a constrained answer may draw from."""
    model_config = ConfigDict(frozen=True)

    words: frozenset[str] = frozenset()
    source_question_id: str = ""
    stoplist_id: str = ""

    @field_validator("words")
    @classmethod
    def validate_words(cls, v: frozenset[str]) -> frozenset[str]:
        for word in v:
            if not word or word != word.lower() or any(ch.isspace() for ch in word):
                raise ValueError(f"invalid bank word {word!r}")
        return v

    @property
    def sorted_words(self) -> list[str]:
        return sorted(self.words)

    @property
    def digest(self) -> str:
        """Content digest, independent of construction order."""
        payload = "\n".join(self.sorted_words) + f"\n#{self.stoplist_id}"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def __len__(self) -> int:
        return len(self.words)


# =============================================================================
# Backend Models
# =============================================================================

class GenerationParams(BaseModel):
    """Sampling parameters sent with every request."""
    model_config = ConfigDict(frozen=True)

    temperature: float = Field(default=0.5, ge=0.0, le=2.0)
    # Stored as one real and sent as nucleus top-p.
    top_k_or_p: float = Field(default=1.0, gt=0.0, le=1.0)
    max_new_tokens: int = Field(default=256, gt=0)
    stop_sequences: tuple[str, ...] = ()


class BackendRequest(BaseModel):
    """A rendered prompt plus generation parameters."""
    model_config = ConfigDict(frozen=True)

    system_text: str = ""
    user_text: str = Field(..., min_length=1)
    params: GenerationParams = Field(default_factory=GenerationParams)
    constraint: Optional[VocabularyBank] = None

    def canonical(self) -> dict[str, Any]:
        return {
            "system_text": self.system_text,
            "user_text": self.user_text,
            "params": self.params.model_dump(mode="json"),
            "constraint": self.constraint.digest if self.constraint is not None else None,
        }

    @property
    def digest(self) -> str:
        """sha256 of the canonical JSON form; stable across field reordering."""
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class TokenUsage(BaseModel):
    model_config = ConfigDict(frozen=True)

    prompt_tokens: int = Field(default=0, ge=0)
    completion_tokens: int = Field(default=0, ge=0)

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class BackendReply(BaseModel):
    """Text returned by a backend."""
    model_config = ConfigDict(frozen=True)

    text: str = ""
    finish_reason: FinishReason = FinishReason.STOP
    usage: TokenUsage = Field(default_factory=TokenUsage)
    latency_seconds: float = Field(default=0.0, ge=0.0)
    attempts: int = Field(default=1, ge=1)
    # Out-of-bank words found by the prompt-constraint audit.
    violations: tuple[str, ...] = ()

    @model_validator(mode="after")
    def validate_error_has_no_text(self) -> "BackendReply":
        if self.finish_reason == FinishReason.ERROR and self.text:
            raise ValueError("error replies must have empty text")
        return self


# =============================================================================
# Strategy & Evaluation Models
# =============================================================================

class StrategyOutcome(BaseModel):
    """Result of running one strategy on one example."""

    example_id: str
    strategy: Strategy
    answer: str = ""
    trace: Any = None
    backend_calls: int = Field(default=0, ge=0)
    failed: bool = False
    failure_reason: Optional[str] = None
    intermediate_answers: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()

    @model_validator(mode="after")
    def validate_calls(self) -> "StrategyOutcome":
        if not self.failed and self.backend_calls < 1:
            raise ValueError("a successful outcome needs at least one backend call")
        return self


class EvalRecord(BaseModel):
    """Per-question score line."""
    model_config = ConfigDict(frozen=True)

    example_id: str
    strategy: Strategy
    prediction: str
    em: int = Field(..., ge=0, le=1)
    f1: float = Field(..., ge=0.0, le=1.0)
    error_category: ErrorCategory
    question_type: QuestionType = QuestionType.UNKNOWN
    hop_count: Optional[int] = None
    reasoning_type: ReasoningType = ReasoningType.UNLABELED
    backend_calls: int = 0
    failed: bool = False

    @model_validator(mode="after")
    def validate_em_implies_f1(self) -> "EvalRecord":
        if self.em == 1 and (self.f1 != 1.0 or self.error_category != ErrorCategory.CORRECT):
            raise ValueError("em = 1 requires f1 = 1 and category 'correct'")
        return self

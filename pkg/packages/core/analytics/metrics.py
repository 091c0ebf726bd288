"""
Answer metrics for multi-hop QA.

Provides:
- Answer normalization (HotpotQA / SQuAD pipeline)
- Exact match and token F1, with the yes/no/noanswer special case
- Error-category classification
- Scoring a strategy outcome into an ``EvalRecord``
"""

from __future__ import annotations

import string
from collections import Counter
from typing import Iterable, Sequence

import regex

from packages.core.models import (
    ErrorCategory,
    EvalRecord,
    QAExample,
    Strategy,
    StrategyOutcome,
)

_ARTICLES = regex.compile(r"\b(a|an|the)\b")
_PUNCT = frozenset(string.punctuation)
_SPECIAL = ("yes", "no", "noanswer")

# F1 at or above this (with EM = 0) counts as semantically correct.
SEMANTIC_F1_THRESHOLD = 0.5


def normalize_answer(text: str) -> str:
    """
    Lowercase, drop punctuation, drop articles, collapse whitespace.

    Example: "The Las Vegas Strip!" -> "las vegas strip"
    """
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, gold: str) -> int:
    return int(normalize_answer(prediction) == normalize_answer(gold))


def f1_components(prediction: str, gold: str, yes_no_special_case: bool = True) -> tuple[float, float, float]:
    """
    Token-level (f1, precision, recall) over normalized answers.

    Formula: overlap = |pred tokens ∩ gold tokens| (multiset),
    P = overlap / |pred|, R = overlap / |gold|, F1 = 2PR / (P + R)
    Example: "Las Vegas" vs "Las Vegas Strip in Paradise" -> P 1.0, R 0.4, F1 0.5714

    Identical normalized strings always score 1.0 so that EM implies F1,
    including the case where both sides normalize to "".
    """
    pred = normalize_answer(prediction)
    truth = normalize_answer(gold)
    if pred == truth:
        return 1.0, 1.0, 1.0

    if yes_no_special_case and (pred in _SPECIAL or truth in _SPECIAL):
        return 0.0, 0.0, 0.0

    pred_tokens = pred.split()
    truth_tokens = truth.split()
    common = Counter(pred_tokens) & Counter(truth_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0, 0.0, 0.0

    precision = num_same / len(pred_tokens)
    recall = num_same / len(truth_tokens)
    f1 = (2 * precision * recall) / (precision + recall)
    return f1, precision, recall


def f1_score(prediction: str, gold: str, yes_no_special_case: bool = True) -> float:
    return f1_components(prediction, gold, yes_no_special_case)[0]


def best_exact_match(prediction: str, golds: Sequence[str]) -> int:
    """EM against the gold answer and its aliases."""
    return max((exact_match(prediction, g) for g in golds), default=0)


def best_f1(prediction: str, golds: Sequence[str], yes_no_special_case: bool = True) -> float:
    return max((f1_score(prediction, g, yes_no_special_case) for g in golds), default=0.0)


def categorize_error(
    prediction: str,
    em: int,
    f1: float,
    intermediate_answers: Iterable[str] = (),
    failed: bool = False,
) -> ErrorCategory:
    """
    Checked in order: correct, no answer, intermediate answer,
    semantically correct, wrong answer.
    """
    if em == 1:
        return ErrorCategory.CORRECT
    if failed or not normalize_answer(prediction):
        return ErrorCategory.NO_ANSWER
    if any(exact_match(prediction, answer) for answer in intermediate_answers if answer):
        return ErrorCategory.INTERMEDIATE_ANSWER
    if f1 >= SEMANTIC_F1_THRESHOLD:
        return ErrorCategory.SEMANTICALLY_CORRECT
    return ErrorCategory.WRONG_ANSWER


def score_outcome(
    example: QAExample,
    outcome: StrategyOutcome,
    yes_no_special_case: bool = True,
) -> EvalRecord:
    """Score one strategy outcome against the example's gold answers."""
    return score_prediction(
        example,
        outcome.answer,
        outcome.strategy,
        intermediate_answers=outcome.intermediate_answers,
        failed=outcome.failed,
        backend_calls=outcome.backend_calls,
        yes_no_special_case=yes_no_special_case,
    )


def score_prediction(
    example: QAExample,
    prediction: str,
    strategy: Strategy,
    intermediate_answers: Iterable[str] = (),
    failed: bool = False,
    backend_calls: int = 0,
    yes_no_special_case: bool = True,
) -> EvalRecord:
    """Score a bare prediction. A failed prediction is scored as empty."""
    prediction = "" if failed else prediction
    golds = example.gold_answers
    em = best_exact_match(prediction, golds)
    f1 = 1.0 if em else best_f1(prediction, golds, yes_no_special_case)
    category = categorize_error(prediction, em, f1, intermediate_answers, failed)
    return EvalRecord(
        example_id=example.id,
        strategy=strategy,
        prediction=prediction,
        em=em,
        f1=f1,
        error_category=category,
        question_type=example.question_type,
        hop_count=example.hop_count,
        reasoning_type=example.reasoning_type,
        backend_calls=backend_calls,
        failed=failed,
    )

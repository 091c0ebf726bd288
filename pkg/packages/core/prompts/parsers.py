"""
Parsers for structured fields in model replies.

None of these raise on arbitrary text. Failures come back as a
``ParseOutcome`` with ``error`` set so the caller can apply its default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Generic, Optional, TypeVar

import regex

T = TypeVar("T")

_SUBQUESTION = regex.compile(
    r"Sub[\s-]*Question\s*\d+\s*-\s*\d+\s*:\s*(.+?)(?=\s*Sub[\s-]*Question\s*\d+\s*-\s*\d+\s*:|\s*Thought\s*\d+\s*:|\n|$)",
    regex.IGNORECASE | regex.DOTALL,
)
_NUMBER = regex.compile(r"(?<![\w.])([-+]?\d+(?:\.\d+)?|[-+]?\.\d+)(\s*%|\s*/\s*\d+(?:\.\d+)?)?")
_ANSWER_MARKER = regex.compile(r"answer\s*:", regex.IGNORECASE)
_READINESS = regex.compile(r"original\s+question\s+answerable\s*:\s*(yes|no)\b", regex.IGNORECASE)
_EDGE_PUNCT = regex.compile(r"^[\p{P}\p{S}\s]+|[\p{P}\p{S}\s]+$")


@dataclass(frozen=True)
class ParseOutcome(Generic[T]):
    value: Optional[T] = None
    error: Optional[str] = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.error is None

    def unwrap_or(self, default: T) -> T:
        return self.value if self.error is None and self.value is not None else default


def parse_subquestions(reply: str) -> list[str]:
    """
    Every "Sub Question <level>-<index>: ..." item in reply order, exact
    duplicates removed. An empty list means nothing matched.
    """
    questions: list[str] = []
    for match in _SUBQUESTION.finditer(reply):
        text = " ".join(match.group(1).split())
        if text and text not in questions:
            questions.append(text)
    return questions


def parse_probability(reply: str) -> ParseOutcome[float]:
    """
    First number in the reply as a probability.

    "0.8", "80%" and "8/10" all give 0.8. Values outside [0, 1] are clamped
    and reported in ``warnings``.
    """
    match = _NUMBER.search(reply)
    if match is None:
        return ParseOutcome(error=f"no number in reply: {reply[:80]!r}")

    value = float(match.group(1))
    suffix = (match.group(2) or "").strip()
    if suffix.startswith("%"):
        value /= 100.0
    elif suffix.startswith("/"):
        denominator = float(suffix[1:].strip())
        if denominator == 0:
            return ParseOutcome(error=f"zero denominator in {match.group(0)!r}")
        value /= denominator

    warnings: tuple[str, ...] = ()
    if value < 0.0 or value > 1.0:
        clamped = min(1.0, max(0.0, value))
        warnings = (f"probability {value} clamped to {clamped}",)
        value = clamped
    return ParseOutcome(value=value, warnings=warnings)


def parse_yes_no(reply: str) -> ParseOutcome[bool]:
    """Leading yes/no, case-insensitive, punctuation ignored."""
    stripped = _EDGE_PUNCT.sub("", reply)
    first = stripped.split(maxsplit=1)[0] if stripped.split() else ""
    first = _EDGE_PUNCT.sub("", first).lower()
    if first == "yes":
        return ParseOutcome(value=True)
    if first == "no":
        return ParseOutcome(value=False)
    return ParseOutcome(error=f"no leading yes/no: {reply[:80]!r}")


def extract_marked_answer(reply: str) -> ParseOutcome[str]:
    """
    Text after the last "Answer:" marker, trimmed, trailing period dropped.

    Without a marker the whole reply is returned with a warning.
    """
    matches = list(_ANSWER_MARKER.finditer(reply))
    if not matches:
        return ParseOutcome(value=_clean_answer(reply), warnings=("no Answer: marker",))
    tail = reply[matches[-1].end():]
    first_line = tail.strip().split("\n", 1)[0] if tail.strip() else ""
    return ParseOutcome(value=_clean_answer(first_line))


def parse_readiness(reply: str) -> ParseOutcome[bool]:
    """The "Original question answerable: yes|no" line, if present."""
    match = _READINESS.search(reply)
    if match is None:
        return ParseOutcome(error="no readiness line")
    return ParseOutcome(value=match.group(1).lower() == "yes")


def strip_readiness(reply: str) -> str:
    """Reply text with the readiness line removed."""
    return _READINESS.sub("", reply).strip()


def _clean_answer(text: str) -> str:
    text = text.strip()
    if text.endswith("."):
        text = text[:-1].rstrip()
    return text


def direct_answer(reply: str) -> str:
    """
    Answer from a prompt that already ends in "Answer:": a marker in the
    reply still wins, otherwise the first non-empty line.
    """
    if _ANSWER_MARKER.search(reply):
        return extract_marked_answer(reply).value or ""
    for line in strip_readiness(reply).splitlines():
        if line.strip():
            return _clean_answer(line)
    return ""

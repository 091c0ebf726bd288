"""
Vocabulary bank: the word set a constrained answer may draw from.

A bank is built from the question plus every title and sentence in the
evidence pool, minus a stop-word list. Words are compared in normalized
form (see ``normalize_word``). Numerals made only of digits, '.', ',' and
'-' are always allowed.
"""

from __future__ import annotations

import hashlib
import logging
import unicodedata
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union

import regex
from pydantic import BaseModel, ConfigDict, field_validator

from packages.core.models import EvidencePassage, VocabularyBank

logger = logging.getLogger(__name__)

DEFAULT_STOPLIST_NAME = "en-classic-127"
DEFAULT_STOPLIST_FILE = "stopwords_en.txt"

_EDGE_PUNCT = regex.compile(r"^[\p{P}\p{S}]+|[\p{P}\p{S}]+$")
_LEADING_PUNCT = regex.compile(r"^[\p{P}\p{S}]+")
_NUMERAL = regex.compile(r"^[\d.,\-]*\d[\d.,\-]*$")
_NUMERAL_PREFIX = regex.compile(r"^[\d.,\-]+$")


class Stoplist(BaseModel):
    """Named stop-word list."""
    model_config = ConfigDict(frozen=True)

    name: str
    words: frozenset[str]

    @field_validator("words")
    @classmethod
    def lowercase_words(cls, v: frozenset[str]) -> frozenset[str]:
        return frozenset(w.strip().lower() for w in v if w.strip())

    def __contains__(self, word: object) -> bool:
        return word in self.words

    def __len__(self) -> int:
        return len(self.words)


def load_stoplist(path: Union[str, Path], name: Optional[str] = None) -> Stoplist:
    """Read a stop-word file: one word per line, UTF-8, '#' starts a comment line."""
    path = Path(path)
    words = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        words.append(line)
    return Stoplist(name=name or path.stem, words=frozenset(words))


@lru_cache(maxsize=1)
def default_stoplist() -> Stoplist:
    """The vendored English list shipped with this package."""
    text = resources.files("packages.core.vocab").joinpath(DEFAULT_STOPLIST_FILE).read_text(encoding="utf-8")
    words = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    return Stoplist(name=DEFAULT_STOPLIST_NAME, words=frozenset(words))


def _as_stoplist(stoplist: Union[Stoplist, Iterable[str]]) -> Stoplist:
    if isinstance(stoplist, Stoplist):
        return stoplist
    words = frozenset(w.strip().lower() for w in stoplist if w.strip())
    digest = hashlib.sha256("\n".join(sorted(words)).encode("utf-8")).hexdigest()[:8]
    return Stoplist(name=f"custom-{digest}", words=words)


# =============================================================================
# Word normalization
# =============================================================================

def normalize_word(raw: str) -> Optional[str]:
    """
    Lowercase, NFC-normalize and strip surrounding punctuation/symbols.

    Interior characters (hyphens, apostrophes) are kept. Returns None when
    nothing is left.
    """
    word = unicodedata.normalize("NFC", raw.strip()).lower()
    word = _EDGE_PUNCT.sub("", word)
    return word or None


def strip_leading_punct(chunk: str) -> str:
    return _LEADING_PUNCT.sub("", unicodedata.normalize("NFC", chunk)).lower()


def is_numeral(word: str) -> bool:
    return bool(_NUMERAL.match(word))


def is_numeral_prefix(word: str) -> bool:
    return bool(_NUMERAL_PREFIX.match(word))


# =============================================================================
# Bank construction and queries
# =============================================================================

def _words_of(question: str, evidence: Iterable[EvidencePassage]) -> Iterable[str]:
    yield from question.split()
    for passage in evidence:
        yield from passage.title.split()
        for sentence in passage.sentences:
            yield from sentence.split()


def build_bank(
    question: str,
    evidence: Iterable[EvidencePassage],
    stoplist: Union[Stoplist, Iterable[str], None] = None,
    source_question_id: str = "",
) -> VocabularyBank:
    """Build the bank for one question. Order of ``evidence`` does not matter."""
    if not question.strip():
        raise ValueError("question must not be empty")

    stop = default_stoplist() if stoplist is None else _as_stoplist(stoplist)

    words = set()
    for raw in _words_of(question, evidence):
        word = normalize_word(raw)
        if word is None:
            continue
        if word in stop and not is_numeral(word):
            continue
        words.add(word)

    bank = VocabularyBank(
        words=frozenset(words),
        source_question_id=source_question_id,
        stoplist_id=stop.name,
    )
    logger.debug(f"Built bank for {source_question_id or '<question>'}: {len(bank)} words ({bank.digest})")
    return bank


def contains(bank: VocabularyBank, candidate: str) -> bool:
    """True iff the normalized candidate is a bank word or a numeral."""
    word = normalize_word(candidate)
    if word is None:
        return False
    return word in bank.words or is_numeral(word)


def violation_report(bank: VocabularyBank, answer: str) -> list[str]:
    """
    Normalized answer words that are not in the bank, in order of first
    appearance. Punctuation-only tokens are separators, not words.
    """
    violations: list[str] = []
    for raw in answer.split():
        word = normalize_word(raw)
        if word is None or contains(bank, word):
            continue
        if word not in violations:
            violations.append(word)
    return violations


def render_bank(bank: VocabularyBank) -> str:
    """Comma-separated sorted word list used inside prompts."""
    return ", ".join(bank.sorted_words)

"""
Character-level prefix automaton over a vocabulary bank.

Used by hard constrained decoding: generated text is viewed as a sequence
of whitespace-delimited chunks and a candidate piece of text is accepted
only if every chunk it touches can still become an allowed word.

A chunk is viable when one of these holds:
- after stripping edge punctuation it is empty, a bank word or a numeral
- after stripping leading punctuation it is a prefix of some bank word
- after stripping leading punctuation it is a numeral prefix

A chunk may be closed (by whitespace or end of sequence) only when it is
complete: punctuation-only, a bank word or a numeral.
"""

from __future__ import annotations

from bisect import bisect_left
from typing import Optional

from packages.core.models import VocabularyBank
from packages.core.vocab.bank import (
    contains,
    is_numeral_prefix,
    normalize_word,
    strip_leading_punct,
)


class BankPrefixAutomaton:
    """Prefix queries over one bank. Immutable and safe to share."""

    def __init__(self, bank: VocabularyBank) -> None:
        self.bank = bank
        self._sorted = bank.sorted_words

    def is_word_prefix(self, prefix: str) -> bool:
        if not prefix:
            return True
        i = bisect_left(self._sorted, prefix)
        return i < len(self._sorted) and self._sorted[i].startswith(prefix)

    def is_viable(self, chunk: str) -> bool:
        if not chunk:
            return True
        word = normalize_word(chunk)
        if word is None or contains(self.bank, word):
            return True
        core = strip_leading_punct(chunk)
        return self.is_word_prefix(core) or is_numeral_prefix(core)

    def is_complete(self, chunk: str) -> bool:
        if not chunk:
            return True
        word = normalize_word(chunk)
        return word is None or contains(self.bank, word)

    def extend(self, chunk: str, piece: str) -> Optional[str]:
        """
        Feed ``piece`` after the open ``chunk``.

        Returns the new open chunk, or None when the piece would break the
        constraint.
        """
        current = chunk
        for ch in piece:
            if ch.isspace():
                if not self.is_complete(current):
                    return None
                current = ""
                continue
            current += ch
            if not self.is_viable(current):
                return None
        return current

    def trailing_chunk(self, text: str) -> str:
        """The open chunk at the end of ``text`` (empty after whitespace)."""
        if not text or text[-1].isspace():
            return ""
        parts = text.split()
        return parts[-1] if parts else ""

    def truncate_incomplete(self, text: str) -> str:
        """Drop a trailing chunk that never completed into an allowed word."""
        tail = self.trailing_chunk(text)
        if tail and not self.is_complete(tail):
            return text[: len(text) - len(tail)].rstrip()
        return text

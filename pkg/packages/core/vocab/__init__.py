"""
Vocabulary banks for constrained answering.
"""

from packages.core.vocab.bank import (
    DEFAULT_STOPLIST_NAME,
    Stoplist,
    build_bank,
    contains,
    default_stoplist,
    is_numeral,
    load_stoplist,
    normalize_word,
    render_bank,
    violation_report,
)
from packages.core.vocab.prefix import BankPrefixAutomaton

__all__ = [
    "DEFAULT_STOPLIST_NAME",
    "BankPrefixAutomaton",
    "Stoplist",
    "build_bank",
    "contains",
    "default_stoplist",
    "is_numeral",
    "load_stoplist",
    "normalize_word",
    "render_bank",
    "violation_report",
]

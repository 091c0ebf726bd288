import pytest

from packages.core.models import EvidencePassage, VocabularyBank
from packages.core.vocab import (
    BankPrefixAutomaton,
    build_bank,
    contains,
    default_stoplist,
    load_stoplist,
    normalize_word,
    render_bank,
    violation_report,
)

QUESTION = "The actor that received the 2016 Academy Honorary Award co-starred with Chris Tucker in which movie?"
EVIDENCE = (
    EvidencePassage(title="Jackie Chan", sentences=("Jackie Chan is a Hong Kong actor.", "He received an Academy Honorary Award in 2016.")),
    EvidencePassage(title="Rush Hour (1998 film)", sentences=("Rush Hour is a 1998 film starring Jackie Chan and Chris Tucker.",)),
)


@pytest.fixture
def bank():
    return build_bank(QUESTION, EVIDENCE, source_question_id="fig1")


def test_default_stoplist():
    stoplist = default_stoplist()
    assert stoplist.name == "en-classic-127"
    assert len(stoplist) == 127
    assert "the" in stoplist
    assert "movie" not in stoplist


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Movie?", "movie"),
        ("(1998", "1998"),
        ("co-starred", "co-starred"),
        ("Arthur's", "arthur's"),
        ('"Rush', "rush"),
        ("...", None),
        ("  ", None),
    ],
)
def test_normalize_word(raw, expected):
    assert normalize_word(raw) == expected


def test_build_bank_drops_stopwords_and_keeps_numerals(bank):
    assert {"actor", "received", "2016", "1998", "co-starred", "movie", "rush", "hour", "film", "jackie", "chan"} <= bank.words
    assert "the" not in bank.words
    assert "which" not in bank.words
    assert bank.source_question_id == "fig1"
    assert bank.stoplist_id == "en-classic-127"


def test_bank_is_independent_of_evidence_order(bank):
    reversed_bank = build_bank(QUESTION, tuple(reversed(EVIDENCE)), source_question_id="fig1")
    assert reversed_bank.words == bank.words
    assert reversed_bank.digest == bank.digest


def test_bank_digest_depends_on_stoplist():
    default = build_bank(QUESTION, EVIDENCE)
    custom = build_bank(QUESTION, EVIDENCE, stoplist=["actor"])
    assert "actor" not in custom.words
    assert "the" in custom.words
    assert custom.stoplist_id.startswith("custom-")
    assert custom.digest != default.digest


def test_empty_question_is_rejected():
    with pytest.raises(ValueError):
        build_bank("   ", EVIDENCE)


def test_load_stoplist_skips_comments(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text("# header\nThe\n\nof\n", encoding="utf-8")
    stoplist = load_stoplist(path)
    assert stoplist.name == "tiny"
    assert stoplist.words == frozenset({"the", "of"})


@pytest.mark.parametrize(
    "candidate, expected",
    [
        ("Rush", True),
        ("Hour.", True),
        ("1,000", True),
        ("1969-1974", True),
        ("Tokyo", False),
        ("the", False),
        ("...", False),
        ("", False),
    ],
)
def test_contains(bank, candidate, expected):
    assert contains(bank, candidate) is expected


def test_violation_report_is_ordered_and_deduplicated(bank):
    assert violation_report(bank, "Jackie Chan, the Tokyo tokyo! - Rush") == ["the", "tokyo"]
    assert violation_report(bank, "Rush Hour") == []
    assert violation_report(bank, "") == []


def test_render_bank_is_sorted(bank):
    rendered = render_bank(bank)
    assert rendered.split(", ") == sorted(bank.words)


# --- prefix automaton ------------------------------------------------------------

@pytest.fixture
def automaton():
    return BankPrefixAutomaton(VocabularyBank(words=frozenset({"rush", "hour", "rushmore"})))


def test_word_prefixes(automaton):
    assert automaton.is_word_prefix("")
    assert automaton.is_word_prefix("rus")
    assert automaton.is_word_prefix("rushm")
    assert not automaton.is_word_prefix("rx")


def test_extend_accepts_bank_words(automaton):
    chunk = automaton.extend("", "Ru")
    assert chunk == "Ru"
    assert automaton.extend(chunk, "sh ") == ""
    assert automaton.extend("", '"Hour",') == '"Hour",'


def test_extend_rejects_out_of_bank_text(automaton):
    assert automaton.extend("", "Tok") is None
    # closing an unfinished word is not allowed
    assert automaton.extend("rus", " ") is None


def test_numerals_are_always_viable(automaton):
    assert automaton.extend("", "19") == "19"
    assert automaton.is_complete("1998")
    assert automaton.extend("19", "98 ") == ""


def test_truncate_incomplete(automaton):
    assert automaton.truncate_incomplete("Rush Hou") == "Rush"
    assert automaton.truncate_incomplete("Rush Hour") == "Rush Hour"
    assert automaton.truncate_incomplete("Rush ") == "Rush "

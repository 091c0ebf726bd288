import pytest

from packages.core.analytics import metrics
from packages.core.analytics.report import (
    aggregate,
    compare_reports,
    render_comparison,
    render_report_table,
    write_records_csv,
)
from packages.core.errors import PreconditionError, RunMismatchError
from packages.core.models import (
    ErrorCategory,
    EvalRecord,
    EvidencePassage,
    QAExample,
    QuestionType,
    ReasoningType,
    Strategy,
    StrategyOutcome,
)

# (prediction, gold, EM, F1) as the official HotpotQA evaluation script scores them.
GOLDEN_PAIRS = [
    ("Las Vegas", "Las Vegas Strip in Paradise", 0, 4 / 7),
    ("1969 to 1974", "1969 until 1974", 0, 2 / 3),
    ("Rush Hour", "Rush Hour", 1, 1.0),
    ("the Rush Hour.", "Rush Hour", 1, 1.0),
    ("yes", "yes", 1, 1.0),
    ("yes", "no", 0, 0.0),
    ("Hong Kong film", "Hong Kong action film", 0, 6 / 7),
    ("New Delhi", "Delhi", 0, 2 / 3),
    ("Chief of Protocol", "Chief of Protocol of the United States", 0, 2 / 3),
    ("", "Rush Hour", 0, 0.0),
    ("Arthur's Magazine", "Arthur's Magazine", 1, 1.0),
    ("Arthurs Magazine", "Arthur's Magazine", 1, 1.0),
    ("yes it is", "yes", 0, 0.0),
    ("A Hong Kong actor", "Hong Kong", 0, 0.8),
    ("Tokyo", "Kyoto", 0, 0.0),
    ("Paris, France", "Paris", 0, 2 / 3),
    ("an American director", "American", 0, 2 / 3),
    ("Jackie Chan and Chris Tucker", "Chris Tucker", 0, 4 / 7),
    ("1998", "1998 film", 0, 2 / 3),
    ("THE  BEATLES!", "The Beatles", 1, 1.0),
]


@pytest.mark.parametrize("prediction, gold, em, f1", GOLDEN_PAIRS)
def test_golden_pairs(prediction, gold, em, f1):
    assert metrics.exact_match(prediction, gold) == em
    assert abs(metrics.f1_score(prediction, gold) - f1) < 1e-9


@pytest.mark.parametrize("prediction, gold, em, f1", GOLDEN_PAIRS)
def test_scores_do_not_depend_on_argument_order(prediction, gold, em, f1):
    assert metrics.exact_match(gold, prediction) == em
    assert metrics.f1_score(gold, prediction) == pytest.approx(metrics.f1_score(prediction, gold), abs=1e-12)


def test_f1_swapped_pair():
    forward = metrics.f1_components("Las Vegas", "Las Vegas Strip in Paradise")
    backward = metrics.f1_components("Las Vegas Strip in Paradise", "Las Vegas")

    assert forward[0] == pytest.approx(backward[0])
    assert (forward[1], forward[2]) == pytest.approx((backward[2], backward[1]))


def test_worked_examples():
    assert metrics.f1_score("Las Vegas", "Las Vegas Strip in Paradise") == pytest.approx(0.5714, abs=1e-4)
    assert metrics.f1_score("1969 to 1974", "1969 until 1974") == pytest.approx(0.6667, abs=1e-4)


def test_f1_components():
    f1, precision, recall = metrics.f1_components("Las Vegas", "Las Vegas Strip in Paradise")
    assert precision == 1.0
    assert recall == pytest.approx(0.4)
    assert f1 == pytest.approx(4 / 7)


def test_normalize_answer():
    assert metrics.normalize_answer("The Las Vegas Strip!") == "las vegas strip"
    assert metrics.normalize_answer("  An   apple, a day ") == "apple day"


def test_yes_no_special_case_can_be_disabled():
    assert metrics.f1_score("yes it is", "yes") == 0.0
    assert metrics.f1_score("yes it is", "yes", yes_no_special_case=False) == pytest.approx(0.5)


def test_em_implies_full_f1_even_for_empty_normalization():
    assert metrics.exact_match("the", "a") == 1
    assert metrics.f1_score("the", "a") == 1.0


def test_aliases_take_the_best_score():
    assert metrics.best_exact_match("Delhi", ("New Delhi", "Delhi")) == 1
    assert metrics.best_f1("New Delhi", ("Delhi", "New Delhi")) == 1.0
    assert metrics.best_f1("anything", ()) == 0.0


@pytest.mark.parametrize(
    "prediction, em, f1, intermediates, failed, expected",
    [
        ("Rush Hour", 1, 1.0, (), False, ErrorCategory.CORRECT),
        ("", 0, 0.0, (), False, ErrorCategory.NO_ANSWER),
        ("Rush Hour", 0, 0.0, (), True, ErrorCategory.NO_ANSWER),
        ("Jackie Chan", 0, 0.0, ("Jackie Chan", "Rush Hour"), False, ErrorCategory.INTERMEDIATE_ANSWER),
        ("New Delhi", 0, 2 / 3, (), False, ErrorCategory.SEMANTICALLY_CORRECT),
        ("Tokyo", 0, 0.0, ("Kyoto",), False, ErrorCategory.WRONG_ANSWER),
    ],
)
def test_categorize_error(prediction, em, f1, intermediates, failed, expected):
    assert metrics.categorize_error(prediction, em, f1, intermediates, failed) == expected


def _matching_categories(prediction, em, f1, intermediates, failed):
    answered = not failed and bool(metrics.normalize_answer(prediction))
    repeats = any(metrics.exact_match(prediction, a) for a in intermediates if a)
    rules = {
        ErrorCategory.CORRECT: em == 1,
        ErrorCategory.NO_ANSWER: em == 0 and not answered,
        ErrorCategory.INTERMEDIATE_ANSWER: em == 0 and answered and repeats,
        ErrorCategory.SEMANTICALLY_CORRECT: em == 0 and answered and not repeats and f1 >= 0.5,
        ErrorCategory.WRONG_ANSWER: em == 0 and answered and not repeats and f1 < 0.5,
    }
    return [category for category, holds in rules.items() if holds]


def test_every_outcome_gets_exactly_one_category():
    predictions = ["", "the", "Rush Hour", "Jackie Chan", "New Delhi"]
    intermediate_sets = [(), ("Jackie Chan",), ("Rush Hour", "Money Talks"), ("",)]
    for prediction in predictions:
        for em in (0, 1):
            for f1 in (0.0, 0.25, 0.5, 0.8, 1.0):
                for intermediates in intermediate_sets:
                    for failed in (False, True):
                        matching = _matching_categories(prediction, em, f1, intermediates, failed)
                        category = metrics.categorize_error(prediction, em, f1, intermediates, failed)

                        assert len(matching) == 1
                        assert category == matching[0]
                        assert category in set(ErrorCategory)


def _example(example_id="ex1", gold="Rush Hour", aliases=(), question_type=QuestionType.BRIDGE):
    return QAExample(
        id=example_id,
        question="Which movie?",
        gold_answer=gold,
        answer_aliases=aliases,
        question_type=question_type,
        hop_count=2,
        evidence_pool=(EvidencePassage(title="T", sentences=("S.",)),),
    )


def test_score_outcome():
    outcome = StrategyOutcome(
        example_id="ex1",
        strategy=Strategy.STOCTOT,
        answer="Jackie Chan",
        backend_calls=13,
        intermediate_answers=("Jackie Chan",),
    )
    record = metrics.score_outcome(_example(), outcome)

    assert record.em == 0
    assert record.f1 == 0.0
    assert record.error_category == ErrorCategory.INTERMEDIATE_ANSWER
    assert record.backend_calls == 13
    assert record.hop_count == 2


def test_failed_outcome_scores_as_no_answer():
    outcome = StrategyOutcome(example_id="ex1", strategy=Strategy.COT, answer="Rush Hour", failed=True)
    record = metrics.score_outcome(_example(), outcome)

    assert record.prediction == ""
    assert record.em == 0
    assert record.error_category == ErrorCategory.NO_ANSWER
    assert record.failed


# --- reports ---------------------------------------------------------------------

def _record(example_id, em, f1, category, question_type=QuestionType.BRIDGE, reasoning=ReasoningType.UNLABELED,
            hop_count=2, failed=False, strategy=Strategy.VANILLA, calls=1):
    return EvalRecord(
        example_id=example_id,
        strategy=strategy,
        prediction="p",
        em=em,
        f1=f1,
        error_category=category,
        question_type=question_type,
        hop_count=hop_count,
        reasoning_type=reasoning,
        backend_calls=calls,
        failed=failed,
    )


@pytest.fixture
def records():
    return [
        _record("a", 1, 1.0, ErrorCategory.CORRECT, reasoning=ReasoningType.SEQUENTIAL),
        _record("b", 0, 0.5, ErrorCategory.SEMANTICALLY_CORRECT, question_type=QuestionType.COMPARISON),
        _record("c", 0, 0.0, ErrorCategory.NO_ANSWER, hop_count=3, failed=True, calls=0),
        _record("d", 0, 0.0, ErrorCategory.WRONG_ANSWER, reasoning=ReasoningType.PARALLEL),
    ]


def test_aggregate(records):
    report = aggregate(records)

    assert report.n == 4
    assert report.em == 25.0
    assert report.f1 == 37.5
    assert report.strategy == "vanilla"
    assert report.backend_calls == 3
    assert report.failed_ids == ["c"]
    assert report.error_counts == {
        "correct": 1,
        "semantically_correct": 1,
        "wrong_answer": 1,
        "intermediate_answer": 0,
        "no_answer": 1,
    }
    assert report.error_ratios["no_answer"] == pytest.approx(1 / 3)
    assert "correct" not in report.error_ratios

    assert report.breakdowns["question_type"]["bridge"].n == 3
    assert report.breakdowns["question_type"]["comparison"].f1 == 50.0
    assert set(report.breakdowns["reasoning_type"]) == {"sequential", "parallel"}
    assert report.breakdowns["hop_count"]["3-hop"].n == 1


def test_aggregate_skips_unlabeled_axes():
    report = aggregate([_record("a", 1, 1.0, ErrorCategory.CORRECT, question_type=QuestionType.UNKNOWN, hop_count=None)])
    assert report.breakdowns == {}


def test_aggregate_empty():
    with pytest.raises(PreconditionError):
        aggregate([])


def test_render_report_table(records):
    text = render_report_table(aggregate(records))
    assert "strategy: vanilla" in text
    assert "overall" in text
    assert "question_type=bridge" in text
    assert "failed: c" in text


def test_write_records_csv(records, tmp_path):
    path = tmp_path / "records.csv"
    write_records_csv(records, path)
    lines = path.read_text(encoding="utf-8").splitlines()

    assert lines[0].startswith("example_id,strategy,prediction,em,f1,error_category")
    assert len(lines) == 5


def test_compare_reports(records):
    better = [r.model_copy(update={"em": 1, "f1": 1.0, "error_category": ErrorCategory.CORRECT}) if r.example_id == "d" else r
              for r in records]
    frame = compare_reports(["base", "better"], [records, better])

    assert list(frame["run"]) == ["base", "better"]
    assert frame.loc[1, "dEM"] == pytest.approx(25.0)
    assert frame.loc[1, "d_correct"] == 1
    assert frame.loc[1, "d_wrong_answer"] == -1
    assert frame.loc[0, "dF1"] == 0.0
    assert "better" in render_comparison(frame)


def test_compare_needs_two_runs(records):
    with pytest.raises(PreconditionError):
        compare_reports(["only"], [records])


def test_compare_rejects_different_examples(records):
    with pytest.raises(RunMismatchError) as exc_info:
        compare_reports(["a", "b"], [records, records[:2]])
    assert exc_info.value.symmetric_difference == ("c", "d")

"""
Aggregate reports over evaluation records.

Uses pandas for the breakdowns, the per-record CSV and the aligned text
table. Breakdowns whose axis is entirely unlabeled are omitted.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd
from pydantic import BaseModel, Field

from packages.core.errors import PreconditionError, RunMismatchError
from packages.core.models import ErrorCategory, EvalRecord, QuestionType, ReasoningType

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [
    "example_id",
    "strategy",
    "prediction",
    "em",
    "f1",
    "error_category",
    "question_type",
    "hop_count",
    "reasoning_type",
    "backend_calls",
    "failed",
]


class GroupScore(BaseModel):
    n: int
    em: float
    f1: float


class RunReport(BaseModel):
    """Mean EM / F1 (x100) plus breakdowns for one run."""

    strategy: str
    n: int
    em: float
    f1: float
    breakdowns: dict[str, dict[str, GroupScore]] = Field(default_factory=dict)
    error_counts: dict[str, int] = Field(default_factory=dict)
    # Share of each non-correct category among the incorrect records.
    error_ratios: dict[str, float] = Field(default_factory=dict)
    backend_calls: int = 0
    failed_ids: list[str] = Field(default_factory=list)


def records_frame(records: Sequence[EvalRecord]) -> pd.DataFrame:
    rows = [r.model_dump(mode="json") for r in records]
    return pd.DataFrame(rows, columns=RECORD_COLUMNS)


def _group_scores(df: pd.DataFrame, column: str) -> dict[str, GroupScore]:
    grouped = df.groupby(column, sort=True)
    return {
        str(key): GroupScore(
            n=int(len(group)),
            em=float(group["em"].mean() * 100),
            f1=float(group["f1"].mean() * 100),
        )
        for key, group in grouped
    }


def aggregate(records: Sequence[EvalRecord]) -> RunReport:
    """
    Mean EM and F1 (x100), counts and breakdowns by question type,
    reasoning type (labeled records only) and hop count.

    Example: em {1, 0}, f1 {1.0, 0.5} -> EM 50.0, F1 75.0
    """
    if not records:
        raise PreconditionError("cannot aggregate an empty record list")

    df = records_frame(records)
    strategies = sorted(df["strategy"].unique())

    breakdowns: dict[str, dict[str, GroupScore]] = {}
    typed = df[df["question_type"] != QuestionType.UNKNOWN.value]
    if not typed.empty:
        breakdowns["question_type"] = _group_scores(typed, "question_type")
    labeled = df[df["reasoning_type"] != ReasoningType.UNLABELED.value]
    if not labeled.empty:
        breakdowns["reasoning_type"] = _group_scores(labeled, "reasoning_type")
    hopped = df[df["hop_count"].notna()].copy()
    if not hopped.empty:
        hopped["hop_count"] = hopped["hop_count"].astype(int).astype(str) + "-hop"
        breakdowns["hop_count"] = _group_scores(hopped, "hop_count")

    counts = df["error_category"].value_counts()
    error_counts = {c.value: int(counts.get(c.value, 0)) for c in ErrorCategory}
    wrong = len(df) - error_counts[ErrorCategory.CORRECT.value]
    error_ratios = {
        c.value: (error_counts[c.value] / wrong if wrong else 0.0)
        for c in ErrorCategory
        if c != ErrorCategory.CORRECT
    }

    return RunReport(
        strategy=",".join(strategies),
        n=int(len(df)),
        em=float(df["em"].mean() * 100),
        f1=float(df["f1"].mean() * 100),
        breakdowns=breakdowns,
        error_counts=error_counts,
        error_ratios=error_ratios,
        backend_calls=int(df["backend_calls"].sum()),
        failed_ids=sorted(df.loc[df["failed"], "example_id"].tolist()),
    )


def render_report_table(report: RunReport) -> str:
    """Aligned-column text rendering of a report."""
    rows = [{"group": "overall", "n": report.n, "EM": report.em, "F1": report.f1}]
    for axis, groups in report.breakdowns.items():
        for key, score in groups.items():
            rows.append({"group": f"{axis}={key}", "n": score.n, "EM": score.em, "F1": score.f1})
    table = pd.DataFrame(rows, columns=["group", "n", "EM", "F1"])

    errors = pd.DataFrame(
        [
            {"category": k, "count": report.error_counts.get(k, 0), "share_of_errors": report.error_ratios.get(k)}
            for k in report.error_counts
        ],
        columns=["category", "count", "share_of_errors"],
    )

    lines = [
        f"strategy: {report.strategy}",
        f"backend calls: {report.backend_calls}",
        table.to_string(index=False, float_format=lambda v: f"{v:.2f}"),
        "",
        errors.to_string(index=False, float_format=lambda v: f"{v:.3f}", na_rep="-"),
    ]
    if report.failed_ids:
        lines += ["", "failed: " + ", ".join(report.failed_ids)]
    return "\n".join(lines) + "\n"


def write_records_csv(records: Sequence[EvalRecord], path: Union[str, Path]) -> None:
    records_frame(records).to_csv(path, index=False, lineterminator="\n")


# =============================================================================
# Run comparison
# =============================================================================

def compare_reports(
    labels: Sequence[str],
    record_sets: Sequence[Sequence[EvalRecord]],
) -> pd.DataFrame:
    """
    Side-by-side EM/F1 per run plus per-category count deltas against the
    first run.
    """
    if len(record_sets) < 2:
        raise PreconditionError("compare needs at least two runs")

    id_sets = [{r.example_id for r in records} for records in record_sets]
    base_ids = id_sets[0]
    for ids in id_sets[1:]:
        if ids != base_ids:
            raise RunMismatchError(base_ids ^ ids)

    reports = [aggregate(records) for records in record_sets]
    base = reports[0]
    rows = []
    for label, report in zip(labels, reports):
        row: dict[str, Optional[Union[str, float, int]]] = {
            "run": label,
            "strategy": report.strategy,
            "n": report.n,
            "EM": report.em,
            "F1": report.f1,
            "dEM": report.em - base.em,
            "dF1": report.f1 - base.f1,
        }
        for category in ErrorCategory:
            row[f"d_{category.value}"] = report.error_counts[category.value] - base.error_counts[category.value]
        rows.append(row)
    return pd.DataFrame(rows)


def render_comparison(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, float_format=lambda v: f"{v:.2f}") + "\n"

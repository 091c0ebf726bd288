"""
Evaluation for multi-hop QA runs.

Exports:
- metrics: answer normalization, EM/F1, error categories, outcome scoring
- report: aggregate reports, text tables, CSV output, run comparison
"""

from packages.core.analytics.metrics import (
    SEMANTIC_F1_THRESHOLD,
    best_exact_match,
    best_f1,
    categorize_error,
    exact_match,
    f1_components,
    f1_score,
    normalize_answer,
    score_outcome,
    score_prediction,
)
from packages.core.analytics.report import (
    GroupScore,
    RunReport,
    aggregate,
    compare_reports,
    render_comparison,
    render_report_table,
    write_records_csv,
)

__all__ = [
    "SEMANTIC_F1_THRESHOLD",
    "best_exact_match",
    "best_f1",
    "categorize_error",
    "exact_match",
    "f1_components",
    "f1_score",
    "normalize_answer",
    "score_outcome",
    "score_prediction",
    "GroupScore",
    "RunReport",
    "aggregate",
    "compare_reports",
    "render_comparison",
    "render_report_table",
    "write_records_csv",
]

"""
Prompt templates and reply parsers.
"""

from packages.core.prompts.parsers import (
    ParseOutcome,
    direct_answer,
    extract_marked_answer,
    parse_probability,
    parse_readiness,
    parse_subquestions,
    parse_yes_no,
    strip_readiness,
)
from packages.core.prompts.templates import (
    DemoFlavor,
    PromptTemplate,
    TemplateName,
    TemplateRegistry,
    render,
    render_chain,
    render_evidence,
    render_question_list,
)

__all__ = [
    "DemoFlavor",
    "ParseOutcome",
    "PromptTemplate",
    "TemplateName",
    "TemplateRegistry",
    "direct_answer",
    "extract_marked_answer",
    "parse_probability",
    "parse_readiness",
    "parse_subquestions",
    "parse_yes_no",
    "render",
    "render_chain",
    "render_evidence",
    "render_question_list",
    "strip_readiness",
]

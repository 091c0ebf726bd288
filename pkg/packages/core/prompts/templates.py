"""
Prompt template registry.

Templates are UTF-8 text files under ``templates/`` with ``{name}``
placeholders. Lines starting with ``##`` at the top of a file are header
notes and are not part of the body. A directory passed as ``override_dir``
replaces any shipped template with a file of the same name.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import regex

from packages.core.errors import TemplateBindingError
from packages.core.models import EvidencePassage

logger = logging.getLogger(__name__)

PLACEHOLDER = regex.compile(r"\{([a-z_]+)\}")


class TemplateName(str, Enum):
    SUBQUESTION_GEN = "subquestion_gen"
    CONSTRAINED_ANSWER = "constrained_answer"
    PARAPHRASE_CHECK = "paraphrase_check"
    VALIDITY_ESTIMATE = "validity_estimate"
    FINAL_ANSWER = "final_answer"
    VANILLA = "vanilla"
    COT = "cot"
    TOT_VOTE = "tot_vote"
    # Unconstrained variants and suffixes
    PLAIN_ANSWER = "plain_answer"
    FINAL_ANSWER_OPEN = "final_answer_open"
    VOCABULARY_SUFFIX = "vocabulary_suffix"
    READINESS_SUFFIX = "readiness_suffix"
    READINESS_CHECK = "readiness_check"


class DemoFlavor(str, Enum):
    """Which worked example the sub-question prompt carries."""
    COMPARISON_DEMO = "comparison_demo"
    BRIDGE_DEMO = "bridge_demo"
    BOTH = "both"


_FLAVOR_FILES = {
    DemoFlavor.BOTH: "subquestion_gen",
    DemoFlavor.COMPARISON_DEMO: "subquestion_gen_comparison",
    DemoFlavor.BRIDGE_DEMO: "subquestion_gen_bridge",
}


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    body: str
    demo_flavor: DemoFlavor = DemoFlavor.BOTH
    source: str = "builtin"

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: list[str] = []
        for match in PLACEHOLDER.finditer(self.body):
            if match.group(1) not in seen:
                seen.append(match.group(1))
        return tuple(seen)

    def render(self, bindings: Mapping[str, str]) -> str:
        return render(self, bindings)


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """
    Substitute every placeholder in one pass.

    Bound values are inserted literally, so braces inside a value are never
    treated as placeholders.
    """
    for name in template.placeholders:
        if name not in bindings:
            raise TemplateBindingError(template.name.value, name)
    return PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template.body)


def _strip_header(text: str) -> str:
    lines = text.splitlines(keepends=True)
    while lines and lines[0].startswith("##"):
        lines.pop(0)
    return "".join(lines).rstrip("\n")


@lru_cache(maxsize=32)
def _builtin_text(file_stem: str) -> str:
    return resources.files("packages.core.prompts").joinpath("templates", f"{file_stem}.txt").read_text(encoding="utf-8")


class TemplateRegistry:
    """Looks templates up by name, preferring files in ``override_dir``."""

    def __init__(self, override_dir: Optional[Union[str, Path]] = None) -> None:
        self.override_dir = Path(override_dir) if override_dir else None
        self._cache: dict[str, PromptTemplate] = {}

    def _load(self, file_stem: str, name: TemplateName, flavor: DemoFlavor) -> PromptTemplate:
        if file_stem in self._cache:
            return self._cache[file_stem]

        source = "builtin"
        if self.override_dir is not None:
            candidate = self.override_dir / f"{file_stem}.txt"
            if candidate.is_file():
                text = candidate.read_text(encoding="utf-8")
                source = str(candidate)
                logger.info(f"Using template override {candidate}")
            else:
                text = _builtin_text(file_stem)
        else:
            text = _builtin_text(file_stem)

        template = PromptTemplate(name=name, body=_strip_header(text), demo_flavor=flavor, source=source)
        self._cache[file_stem] = template
        return template

    def get(self, name: Union[TemplateName, str]) -> PromptTemplate:
        name = TemplateName(name)
        if name == TemplateName.SUBQUESTION_GEN:
            return self.subquestion_template(DemoFlavor.BOTH)
        return self._load(name.value, name, DemoFlavor.BOTH)

    def subquestion_template(self, flavor: DemoFlavor = DemoFlavor.BOTH) -> PromptTemplate:
        return self._load(_FLAVOR_FILES[DemoFlavor(flavor)], TemplateName.SUBQUESTION_GEN, DemoFlavor(flavor))

    def render(self, name: Union[TemplateName, str], bindings: Mapping[str, str]) -> str:
        return render(self.get(name), bindings)


# =============================================================================
# Binding helpers
# =============================================================================

def render_evidence(passages: Sequence[EvidencePassage]) -> str:
    """One "title: sentences" line per passage, input order kept."""
    return "\n" + "\n".join(f"{p.title}: {p.text}" for p in passages)


def render_chain(pairs: Iterable[tuple[str, str]]) -> str:
    """Answered (question, answer) pairs, root-first, as a prompt preamble."""
    lines = [f"Sub Question {i}: {q} Answer: {a}" for i, (q, a) in enumerate(pairs, start=1)]
    if not lines:
        return ""
    return "Answered so far:\n" + "\n".join(lines) + "\n"


def render_question_list(questions: Iterable[str]) -> str:
    return "\n".join(f"- {q}" for q in questions)

"""
Reasoning tree data and path scoring.
"""

from packages.core.reasoning.tree import (
    NodeStatus,
    PathScore,
    ReasoningNode,
    ReasoningTree,
    aggregate_path,
    select_answer,
)

__all__ = [
    "NodeStatus",
    "PathScore",
    "ReasoningNode",
    "ReasoningTree",
    "aggregate_path",
    "select_answer",
]

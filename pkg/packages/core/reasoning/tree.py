"""
Reasoning tree data, path scoring and answer selection.

The tree is plain data. All mutation happens in the engine coordinator
(``apps.runner.jobs.stoctot``); this module only offers bookkeeping and
pure scoring functions.
"""

from __future__ import annotations

import json
from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field

from packages.core.errors import EngineFailureError, PreconditionError


class NodeStatus(str, Enum):
    OPEN = "open"
    ANSWERED = "answered"
    PRUNED = "pruned"
    LEAF = "leaf"


class ReasoningNode(BaseModel):
    """One question in the tree. The root holds the original question."""
    model_config = ConfigDict(validate_assignment=True)

    node_id: int = Field(..., ge=0)
    parent: Optional[int] = None
    depth: int = Field(..., ge=0)
    question_text: str
    answer_text: Optional[str] = None
    validity: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    status: NodeStatus = NodeStatus.OPEN
    children: list[int] = Field(default_factory=list)
    final_answer: Optional[str] = None
    # Set when the model says the original question can now be answered.
    ready: bool = False
    failed: bool = False
    flags: list[str] = Field(default_factory=list)
    prompt_digests: list[str] = Field(default_factory=list)


class PathScore(BaseModel):
    """Aggregated probability of one root-to-leaf path."""
    model_config = ConfigDict(frozen=True)

    leaf_id: int
    p_final: float = Field(..., ge=0.0, le=1.0)
    factors: tuple[tuple[int, float], ...] = ()


class ReasoningTree(BaseModel):
    example_id: str
    root_id: int = 0
    nodes: dict[int, ReasoningNode] = Field(default_factory=dict)
    backend_calls: int = 0
    chosen_leaf: Optional[int] = None
    flags: list[str] = Field(default_factory=list)

    @classmethod
    def start(cls, example_id: str, question: str) -> "ReasoningTree":
        tree = cls(example_id=example_id)
        tree.nodes[0] = ReasoningNode(node_id=0, parent=None, depth=0, question_text=question)
        return tree

    @property
    def root(self) -> ReasoningNode:
        return self.nodes[self.root_id]

    def node(self, node_id: int) -> ReasoningNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise PreconditionError(f"unknown node {node_id}") from None

    def add_child(self, parent_id: int, question: str) -> ReasoningNode:
        parent = self.node(parent_id)
        if parent.status == NodeStatus.PRUNED:
            raise PreconditionError(f"node {parent_id} is pruned and cannot have children")
        node_id = max(self.nodes) + 1
        child = ReasoningNode(node_id=node_id, parent=parent_id, depth=parent.depth + 1, question_text=question)
        self.nodes[node_id] = child
        parent.children.append(node_id)
        return child

    def path_to(self, node_id: int) -> list[ReasoningNode]:
        """Nodes from the root down to ``node_id``."""
        path = []
        current: Optional[int] = node_id
        seen: set[int] = set()
        while current is not None:
            if current in seen:
                raise PreconditionError(f"cycle through node {current}")
            seen.add(current)
            node = self.node(current)
            path.append(node)
            current = node.parent
        path.reverse()
        return path

    def ancestors(self, node_id: int) -> list[ReasoningNode]:
        return self.path_to(node_id)[:-1]

    def qa_chain(self, node_id: int) -> list[tuple[str, str]]:
        """Answered (question, answer) pairs on the path, root excluded."""
        return [
            (n.question_text, n.answer_text)
            for n in self.path_to(node_id)[1:]
            if n.answer_text is not None
        ]

    def leaves(self) -> list[ReasoningNode]:
        return [n for n in self.sorted_nodes() if n.status == NodeStatus.LEAF]

    def sorted_nodes(self) -> list[ReasoningNode]:
        return [self.nodes[k] for k in sorted(self.nodes)]

    def surviving_children(self, node_id: int) -> list[int]:
        return [c for c in self.node(node_id).children if self.nodes[c].status != NodeStatus.PRUNED]

    def intermediate_answers(self) -> list[str]:
        """Answers of non-leaf sub-questions, in node order."""
        return [
            n.answer_text
            for n in self.sorted_nodes()
            if n.node_id != self.root_id and n.status != NodeStatus.LEAF and n.answer_text
        ]

    def failure_rate(self) -> float:
        if not self.nodes:
            return 0.0
        return sum(1 for n in self.nodes.values() if n.failed) / len(self.nodes)

    def check_invariants(self) -> None:
        """Raise ``PreconditionError`` if the tree structure is inconsistent."""
        root = self.nodes.get(self.root_id)
        if root is None or root.depth != 0 or root.parent is not None:
            raise PreconditionError("root must exist with depth 0 and no parent")

        for node in self.nodes.values():
            if node.node_id != self.root_id:
                if node.parent not in self.nodes:
                    raise PreconditionError(f"node {node.node_id} has missing parent {node.parent}")
                parent = self.nodes[node.parent]
                if node.depth != parent.depth + 1:
                    raise PreconditionError(f"node {node.node_id} depth {node.depth} != parent depth + 1")
                if node.node_id not in parent.children:
                    raise PreconditionError(f"node {node.node_id} missing from parent's children")
                has_validity = node.validity is not None
                scored = node.status in (NodeStatus.ANSWERED, NodeStatus.LEAF)
                if has_validity != scored:
                    raise PreconditionError(
                        f"node {node.node_id} status {node.status.value} inconsistent with validity {node.validity}"
                    )
            if node.status == NodeStatus.PRUNED and node.children:
                raise PreconditionError(f"pruned node {node.node_id} has children")
            self.path_to(node.node_id)

    def to_json(self) -> str:
        """Stable JSON dump for diffing: nodes by id, fixed field order."""
        payload: dict[str, Any] = {
            "example_id": self.example_id,
            "root_id": self.root_id,
            "backend_calls": self.backend_calls,
            "chosen_leaf": self.chosen_leaf,
            "chosen_path": [n.node_id for n in self.path_to(self.chosen_leaf)] if self.chosen_leaf is not None else [],
            "flags": list(self.flags),
            "nodes": [n.model_dump(mode="json") for n in self.sorted_nodes()],
            "edges": [[n.parent, n.node_id] for n in self.sorted_nodes() if n.parent is not None],
        }
        return json.dumps(payload, indent=2, ensure_ascii=False)


# =============================================================================
# Scoring
# =============================================================================

def aggregate_path(tree: ReasoningTree, leaf_id: int) -> PathScore:
    """
    Product of validities from the first generated node down to the leaf.
    The root contributes no factor; a root leaf scores 1.0.
    """
    leaf = tree.node(leaf_id)
    if leaf.status != NodeStatus.LEAF:
        raise PreconditionError(f"node {leaf_id} is not a leaf")

    factors = []
    p_final = 1.0
    for node in tree.path_to(leaf_id)[1:]:
        if node.validity is None:
            raise PreconditionError(f"node {node.node_id} on the path to {leaf_id} has no validity")
        factors.append((node.node_id, node.validity))
        p_final *= node.validity
    return PathScore(leaf_id=leaf_id, p_final=p_final, factors=tuple(factors))


def select_answer(tree: ReasoningTree) -> tuple[str, PathScore]:
    """
    Highest ``p_final`` wins; ties go to the shorter path, then the lower
    node id.
    """
    leaves = tree.leaves()
    if not leaves:
        raise EngineFailureError(f"no leaves in tree for {tree.example_id}", tree=tree)

    scores = [aggregate_path(tree, leaf.node_id) for leaf in leaves]
    best = min(scores, key=lambda s: (-s.p_final, len(s.factors), s.leaf_id))
    tree.chosen_leaf = best.leaf_id
    return tree.node(best.leaf_id).final_answer or "", best

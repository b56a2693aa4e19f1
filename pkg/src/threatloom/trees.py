"""AND/OR threat trees: evaluation, minimal cut sets and cross-tree derivations."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

from .model import KnowledgeBase, NodeKind, ThreatTree, TreeNode

CutSet = frozenset  # frozenset[str] of leaf ids


def satisfies(tree: ThreatTree, marked: Iterable[str]) -> bool:
    """Evaluate the root with exactly the ``marked`` leaves set true."""
    marked = set(marked)
    leaves = set(tree.root.leaves())
    unknown = marked - leaves
    if unknown:
        raise KeyError(f"not leaves of tree '{tree.name}': {', '.join(sorted(unknown))}")
    return _evaluate(tree.root, marked)


def _evaluate(node: TreeNode, marked: set) -> bool:
    if node.kind is NodeKind.LEAF:
        return node.id in marked
    if node.kind is NodeKind.AND:
        return all(_evaluate(c, marked) for c in node.children)
    return any(_evaluate(c, marked) for c in node.children)


def _minimize(sets: Iterable[frozenset]) -> set[frozenset]:
    kept: list[frozenset] = []
    for s in sorted(set(sets), key=len):
        if not any(k <= s for k in kept):
            kept.append(s)
    return set(kept)


def _cut_sets(node: TreeNode) -> set[frozenset]:
    if node.kind is NodeKind.LEAF:
        return {frozenset((node.id,))}
    child_sets = [_cut_sets(c) for c in node.children]
    if node.kind is NodeKind.OR:
        return _minimize(s for sets in child_sets for s in sets)
    combined = {frozenset()}
    for sets in child_sets:
        combined = _minimize(a | b for a in combined for b in sets)
    return combined


def enumerate_cut_sets(tree: ThreatTree) -> set[CutSet]:
    """Minimal leaf sets whose joint truth makes the root true.

    Recursive set algebra: OR unions its children's families, AND takes the
    pairwise unions; supersets are pruned after every gate.
    """
    return _cut_sets(tree.root)


def sorted_cut_sets(tree: ThreatTree) -> list[list[str]]:
    """Cut sets as sorted id lists, ordered by size then ids."""
    return sorted((sorted(s) for s in enumerate_cut_sets(tree)), key=lambda s: (len(s), s))


def find_tree(kb: KnowledgeBase, root_id: str) -> ThreatTree:
    for tree in kb.trees:
        if tree.root.id == root_id:
            return tree
    raise KeyError(f"no tree rooted at '{root_id}'")


@dataclass(frozen=True)
class DerivationStep:
    source: str
    target: str
    via: str  # "tree" (child to parent) or "link" (declared cross link)
    requires: tuple[str, ...] = ()  # AND siblings that must also hold


def _edges(kb: KnowledgeBase) -> dict[str, list[DerivationStep]]:
    edges: dict[str, dict[str, DerivationStep]] = {}
    for tree in kb.trees:
        for node in tree.root.walk():
            for child in node.children:
                requires = ()
                if node.kind is NodeKind.AND:
                    requires = tuple(c.id for c in node.children if c.id != child.id)
                edges.setdefault(child.id, {})[node.id] = DerivationStep(child.id, node.id, "tree", requires)
    for link in kb.cross_links:
        # a tree edge between the same pair wins
        edges.setdefault(link.source, {}).setdefault(link.target, DerivationStep(link.source, link.target, "link"))
    return {src: [targets[t] for t in sorted(targets)] for src, targets in edges.items()}


def find_derivation(kb: KnowledgeBase, start: str, goal: str) -> Optional[list[DerivationStep]]:
    """Shortest chain of child-to-parent edges and cross links from ``start`` to ``goal``.

    Ties between equally short chains go to the lexicographically smallest
    node-id sequence. Returns None when ``goal`` is unreachable.
    """
    for node_id in (start, goal):
        if node_id not in kb.node_by_id:
            raise KeyError(f"unknown tree node '{node_id}'")
    if start == goal:
        return []
    edges = _edges(kb)
    # BFS in sorted-neighbour order reaches each node first along its
    # lexicographically smallest shortest chain.
    came_from: dict[str, DerivationStep] = {}
    queue = deque([start])
    visited = {start}
    while queue:
        current = queue.popleft()
        for step in edges.get(current, ()):
            if step.target in visited:
                continue
            visited.add(step.target)
            came_from[step.target] = step
            if step.target == goal:
                chain = []
                node = goal
                while node != start:
                    chain.append(came_from[node])
                    node = came_from[node].source
                return chain[::-1]
            queue.append(step.target)
    return None


def format_derivation(start: str, steps: list[DerivationStep]) -> str:
    """Arrow notation, e.g. ``a → b ∧ c → d``, with AND siblings joined by ``∧``."""
    parts = [start]
    for step in steps:
        if step.requires:
            parts[-1] = " ∧ ".join([parts[-1], *step.requires])
        parts.append(step.target)
    return " → ".join(parts)

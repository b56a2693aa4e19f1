"""Domain types shared by every part of the engine.

All records are frozen dataclasses; cross references are stored as ids and
resolved through :class:`KnowledgeBase` lookups.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional


class PrivacyProperty(str, Enum):
    HARD = "hard"
    SOFT = "soft"


class ThreatCategory(str, Enum):
    LINKABILITY = "linkability"
    IDENTIFIABILITY = "identifiability"
    NON_REPUDIATION = "non_repudiation"
    DETECTABILITY = "detectability"
    DISCLOSURE_OF_INFORMATION = "disclosure_of_information"
    UNAWARENESS = "unawareness"
    NON_COMPLIANCE = "non_compliance"

    @property
    def property(self) -> PrivacyProperty:
        if self in (ThreatCategory.UNAWARENESS, ThreatCategory.NON_COMPLIANCE):
            return PrivacyProperty.SOFT
        return PrivacyProperty.HARD


class ThreatAgent(str, Enum):
    ATTACKER = "attacker"
    DATA_CONTROLLER = "data_controller"
    DATA_PROCESSOR = "data_processor"
    THIRD_PARTY = "third_party"


class NodeKind(str, Enum):
    LEAF = "leaf"
    AND = "and"
    OR = "or"


class DfdElement(str, Enum):
    ENTITY = "entity"
    PROCESS = "process"
    DATA_STORE = "data_store"
    DATA_FLOW = "data_flow"


@dataclass(frozen=True)
class Source:
    id: str
    description: str = ""


@dataclass(frozen=True)
class DetailLevel:
    id: str
    label: str
    parent: Optional[str] = None


@dataclass(frozen=True)
class Threat:
    id: str
    name: str
    source: str
    property: PrivacyProperty
    agents: tuple[ThreatAgent, ...]
    detail: str
    categories: tuple[ThreatCategory, ...] = ()
    description: str = ""
    domain: Optional[str] = None


@dataclass(frozen=True)
class AssetCategory:
    id: str
    name: str


@dataclass(frozen=True)
class Asset:
    id: str
    name: str
    category: str
    source: str
    description: str = ""
    domain: Optional[str] = None


@dataclass(frozen=True)
class Equivalence:
    """``asset`` (secondary source) is covered by ``canonical``."""

    asset: str
    canonical: str


@dataclass(frozen=True)
class TreeNode:
    id: str
    kind: NodeKind
    label: str = ""
    children: tuple["TreeNode", ...] = ()
    dfd_element: Optional[DfdElement] = None
    category: Optional[ThreatCategory] = None

    def walk(self):
        """Yield this node and every descendant, depth first, pre-order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> list[str]:
        return [n.id for n in self.walk() if n.kind is NodeKind.LEAF]


@dataclass(frozen=True)
class CrossLink:
    source: str
    target: str
    note: str = ""


@dataclass(frozen=True)
class ThreatTree:
    name: str
    root: TreeNode
    cross_links: tuple[CrossLink, ...] = ()


@dataclass(frozen=True)
class AssociationRule:
    """Maps a threat to explicit asset ids, or to every asset when ``assets`` is None."""

    threat: str
    assets: Optional[tuple[str, ...]] = None

    @property
    def all_assets(self) -> bool:
        return self.assets is None


@dataclass(frozen=True)
class KnowledgeBase:
    sources: tuple[Source, ...] = ()
    levels: tuple[DetailLevel, ...] = ()
    categories: tuple[AssetCategory, ...] = ()
    assets: tuple[Asset, ...] = ()
    threats: tuple[Threat, ...] = ()
    equivalences: tuple[Equivalence, ...] = ()
    trees: tuple[ThreatTree, ...] = ()
    rules: tuple[AssociationRule, ...] = ()

    # Lookups keep the first definition when ids collide; validation reports the rest.
    @cached_property
    def threat_by_id(self) -> dict[str, Threat]:
        return _first_by_id(self.threats)

    @cached_property
    def asset_by_id(self) -> dict[str, Asset]:
        return _first_by_id(self.assets)

    @cached_property
    def source_by_id(self) -> dict[str, Source]:
        return _first_by_id(self.sources)

    @cached_property
    def level_by_id(self) -> dict[str, DetailLevel]:
        return _first_by_id(self.levels)

    @cached_property
    def category_by_id(self) -> dict[str, AssetCategory]:
        return _first_by_id(self.categories)

    @cached_property
    def node_by_id(self) -> dict[str, TreeNode]:
        nodes: dict[str, TreeNode] = {}
        for tree in self.trees:
            for node in tree.root.walk():
                nodes.setdefault(node.id, node)
        return nodes

    @cached_property
    def parent_of_node(self) -> dict[str, str]:
        parents: dict[str, str] = {}
        for tree in self.trees:
            for node in tree.root.walk():
                for child in node.children:
                    parents.setdefault(child.id, node.id)
        return parents

    @property
    def cross_links(self) -> list[CrossLink]:
        return [link for tree in self.trees for link in tree.cross_links]

    @cached_property
    def equivalence_map(self) -> dict[str, str]:
        mapping: dict[str, str] = {}
        for eq in self.equivalences:
            mapping.setdefault(eq.asset, eq.canonical)
        return mapping

    @cached_property
    def rule_by_threat(self) -> dict[str, AssociationRule]:
        rules: dict[str, AssociationRule] = {}
        for rule in self.rules:
            rules.setdefault(rule.threat, rule)
        return rules

    @cached_property
    def _source_order(self) -> dict[str, int]:
        order: dict[str, int] = {}
        for source in self.sources:
            order.setdefault(source.id, len(order))
        return order

    def source_rank(self, source_id: str) -> int:
        """Position of a source in ``sources.json``; unknown sources sort last."""
        return self._source_order.get(source_id, len(self._source_order))


def _first_by_id(items) -> dict:
    out: dict = {}
    for item in items:
        out.setdefault(item.id, item)
    return out


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    subjects: tuple[str, ...] = field(default=())

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"

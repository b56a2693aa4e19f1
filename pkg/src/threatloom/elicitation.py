"""The three-step combinatoric pipeline.

1. collect domain-independent threats matching the configuration,
2. collect the domain's assets, collapsing declared equivalences,
3. associate each threat with its assets through the analyst's rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .kb import LevelReport, check_level_consistency
from .model import (
    Asset,
    AssociationRule,
    KnowledgeBase,
    PrivacyProperty,
    Threat,
    ThreatAgent,
)


class ElicitationError(Exception):
    pass


@dataclass(frozen=True)
class ElicitationConfig:
    property: PrivacyProperty
    domain: str
    level: str
    agents: frozenset[ThreatAgent] = frozenset(ThreatAgent)

    def __post_init__(self):
        if not self.domain:
            raise ValueError("domain must be non-empty")
        if not self.agents:
            raise ValueError("at least one threat agent is required")

    def check(self, kb: KnowledgeBase) -> None:
        if self.level not in kb.level_by_id:
            raise ElicitationError(f"unknown detail level '{self.level}'")


@dataclass(frozen=True)
class DomainThreat:
    threat: str
    assets: tuple[str, ...]
    domain: str
    all_assets: bool = False


@dataclass(frozen=True)
class ElicitationResult:
    config: ElicitationConfig
    independent: tuple[Threat, ...]
    assets: tuple[Asset, ...]
    dependent: tuple[DomainThreat, ...]
    uncovered: tuple[str, ...] = ()
    level_report: LevelReport = field(default_factory=LevelReport)

    def threat(self, threat_id: str) -> Threat:
        for t in self.independent:
            if t.id == threat_id:
                return t
        raise KeyError(threat_id)

    def asset_names(self, ids: Iterable[str]) -> list[str]:
        by_id = {a.id: a.name for a in self.assets}
        return [by_id[i] for i in ids]


def collect_threats(kb: KnowledgeBase, config: ElicitationConfig) -> list[Threat]:
    """Step 1: domain-independent threats for the property, agents and level."""
    picked = [
        (i, t)
        for i, t in enumerate(kb.threats)
        if t.property is config.property
        and config.agents.intersection(t.agents)
        and t.domain is None
        and t.detail == config.level
    ]
    picked.sort(key=lambda it: (kb.source_rank(it[1].source), it[0]))
    return [t for _, t in picked]


def collect_assets(kb: KnowledgeBase, domain: Optional[str]) -> list[Asset]:
    """Step 2: assets for ``domain`` with equivalence-mapped duplicates dropped.

    Untagged assets apply to every domain. A mapped asset is replaced by its
    canonical target, which is kept in its own position.
    """
    mapping = kb.equivalence_map
    for asset_id, canonical in mapping.items():
        if canonical not in kb.asset_by_id or asset_id not in kb.asset_by_id:
            raise ElicitationError(f"dangling equivalence '{asset_id}' -> '{canonical}'")
    picked = [
        (i, a)
        for i, a in enumerate(kb.assets)
        if (a.domain is None or a.domain == domain) and a.id not in mapping
    ]
    picked.sort(key=lambda it: (kb.source_rank(it[1].source), it[0]))
    return [a for _, a in picked]


def associate(
    threats: Iterable[Threat],
    assets: Iterable[Asset],
    rules: Iterable[AssociationRule],
    domain: str = "",
) -> tuple[list[DomainThreat], list[str]]:
    """Step 3: apply each threat's association rule.

    Returns the domain-dependent threats in threat order, and the ids of
    threats without a rule. Explicit asset ids are emitted in step-2 order.
    """
    assets = list(assets)
    order = {a.id: i for i, a in enumerate(assets)}
    by_threat: dict[str, AssociationRule] = {}
    for rule in rules:
        if rule.threat in by_threat:
            raise ElicitationError(f"more than one association rule for threat '{rule.threat}'")
        by_threat[rule.threat] = rule

    dependent: list[DomainThreat] = []
    uncovered: list[str] = []
    for threat in threats:
        rule = by_threat.get(threat.id)
        if rule is None:
            uncovered.append(threat.id)
            continue
        if rule.all_assets:
            if not assets:
                uncovered.append(threat.id)
                continue
            dependent.append(DomainThreat(threat.id, tuple(order), domain, all_assets=True))
            continue
        outside = [a for a in rule.assets if a not in order]
        if outside:
            raise ElicitationError(
                f"rule for threat '{threat.id}' references asset(s) outside the collected set: {', '.join(outside)}"
            )
        ids = tuple(sorted(set(rule.assets), key=order.__getitem__))
        dependent.append(DomainThreat(threat.id, ids, domain))
    return dependent, uncovered


def run_pipeline(kb: KnowledgeBase, config: ElicitationConfig) -> ElicitationResult:
    config.check(kb)
    threats = collect_threats(kb, config)
    assets = collect_assets(kb, config.domain)
    dependent, uncovered = associate(threats, assets, kb.rules, config.domain)
    return ElicitationResult(
        config=config,
        independent=tuple(threats),
        assets=tuple(assets),
        dependent=tuple(dependent),
        uncovered=tuple(uncovered),
        level_report=check_level_consistency(threats),
    )

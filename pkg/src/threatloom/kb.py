"""Knowledge-base bundles: JSON loading, serialization, validation and the
level-of-detail hierarchy.

A bundle is a directory holding one JSON array per record type::

    sources.json  levels.json  categories.json  assets.json
    threats.json  equivalences.json  trees.json  rules.json

A missing file is read as an empty array. Unknown fields are rejected.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from .model import (
    Asset,
    AssetCategory,
    AssociationRule,
    CrossLink,
    DetailLevel,
    DfdElement,
    Equivalence,
    KnowledgeBase,
    NodeKind,
    PrivacyProperty,
    Source,
    Threat,
    ThreatAgent,
    ThreatCategory,
    ThreatTree,
    TreeNode,
    Violation,
)

BUNDLE_FILES = (
    "sources.json",
    "levels.json",
    "categories.json",
    "assets.json",
    "threats.json",
    "equivalences.json",
    "trees.json",
    "rules.json",
)

ALL_ASSETS = "all"


class KBError(Exception):
    """Base class for knowledge-base loading failures."""


class KBParseError(KBError):
    def __init__(self, path: Path, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        where = f"{path}"
        if line is not None:
            where += f":{line}:{column}"
        super().__init__(f"{where}: {message}")


class KBValidationError(KBError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "\n".join(f"  {v}" for v in violations)
        super().__init__(f"knowledge base has {len(violations)} violation(s):\n{lines}")


# --------------------------------------------------------------------------
# parsing


class _Fields:
    """Checks one JSON object against an allowed field set."""

    def __init__(self, obj: Any, allowed: Iterable[str], where: str, path: Path):
        if not isinstance(obj, dict):
            raise KBParseError(path, f"{where}: expected an object, got {type(obj).__name__}")
        unknown = sorted(set(obj) - set(allowed))
        if unknown:
            raise KBParseError(path, f"{where}: unknown field(s) {', '.join(unknown)}")
        self.obj = obj
        self.where = where
        self.path = path

    def req(self, name: str, kind: type = str) -> Any:
        if name not in self.obj:
            raise KBParseError(self.path, f"{self.where}: missing field '{name}'")
        return self._typed(name, kind)

    def opt(self, name: str, kind: type = str, default: Any = None) -> Any:
        if self.obj.get(name) is None:
            return default
        return self._typed(name, kind)

    def _typed(self, name: str, kind: type) -> Any:
        value = self.obj[name]
        if not isinstance(value, kind):
            expected = " or ".join(k.__name__ for k in kind) if isinstance(kind, tuple) else kind.__name__
            raise KBParseError(self.path, f"{self.where}: field '{name}' must be {expected}, got {type(value).__name__}")
        return value

    def enum(self, enum_cls, value: Any, name: str):
        try:
            return enum_cls(value)
        except ValueError:
            allowed = ", ".join(m.value for m in enum_cls)
            raise KBParseError(self.path, f"{self.where}: field '{name}' has invalid value {value!r} (expected one of {allowed})")


def _read_array(path: Path) -> list:
    if not path.exists():
        return []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise KBError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KBParseError(path, exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(data, list):
        raise KBParseError(path, "top level must be a JSON array")
    return data


def _parse_source(obj, where, path) -> Source:
    f = _Fields(obj, ("id", "description"), where, path)
    return Source(id=f.req("id"), description=f.opt("description", default=""))


def _parse_level(obj, where, path) -> DetailLevel:
    f = _Fields(obj, ("id", "label", "parent"), where, path)
    return DetailLevel(id=f.req("id"), label=f.req("label"), parent=f.opt("parent"))


def _parse_category(obj, where, path) -> AssetCategory:
    f = _Fields(obj, ("id", "name"), where, path)
    return AssetCategory(id=f.req("id"), name=f.req("name"))


def _parse_asset(obj, where, path) -> Asset:
    f = _Fields(obj, ("id", "name", "category", "source", "description", "domain"), where, path)
    return Asset(
        id=f.req("id"),
        name=f.req("name"),
        category=f.req("category"),
        source=f.req("source"),
        description=f.opt("description", default=""),
        domain=f.opt("domain"),
    )


def _parse_threat(obj, where, path) -> Threat:
    f = _Fields(
        obj,
        ("id", "name", "description", "source", "property", "categories", "agents", "detail", "domain"),
        where,
        path,
    )
    categories = f.opt("categories", list, default=[])
    agents = f.req("agents", list)
    return Threat(
        id=f.req("id"),
        name=f.req("name"),
        description=f.opt("description", default=""),
        source=f.req("source"),
        property=f.enum(PrivacyProperty, f.req("property"), "property"),
        categories=tuple(f.enum(ThreatCategory, c, "categories") for c in categories),
        agents=tuple(f.enum(ThreatAgent, a, "agents") for a in agents),
        detail=f.req("detail"),
        domain=f.opt("domain"),
    )


def _parse_equivalence(obj, where, path) -> Equivalence:
    f = _Fields(obj, ("asset", "canonical"), where, path)
    return Equivalence(asset=f.req("asset"), canonical=f.req("canonical"))


def _parse_node(obj, where, path) -> TreeNode:
    f = _Fields(obj, ("id", "label", "kind", "children", "dfd_element", "category"), where, path)
    node_id = f.req("id")
    children = f.opt("children", list, default=[])
    dfd = f.opt("dfd_element")
    category = f.opt("category")
    return TreeNode(
        id=node_id,
        label=f.opt("label", default=""),
        kind=f.enum(NodeKind, f.req("kind"), "kind"),
        children=tuple(_parse_node(c, f"{where} > {node_id}[{i}]", path) for i, c in enumerate(children)),
        dfd_element=None if dfd is None else f.enum(DfdElement, dfd, "dfd_element"),
        category=None if category is None else f.enum(ThreatCategory, category, "category"),
    )


def _parse_link(obj, where, path) -> CrossLink:
    f = _Fields(obj, ("from", "to", "note"), where, path)
    return CrossLink(source=f.req("from"), target=f.req("to"), note=f.opt("note", default=""))


def _parse_tree(obj, where, path) -> ThreatTree:
    f = _Fields(obj, ("name", "root", "cross_links"), where, path)
    links = f.opt("cross_links", list, default=[])
    return ThreatTree(
        name=f.req("name"),
        root=_parse_node(f.req("root", dict), f"{where} root", path),
        cross_links=tuple(_parse_link(l, f"{where} cross_links[{i}]", path) for i, l in enumerate(links)),
    )


def _parse_rule(obj, where, path) -> AssociationRule:
    f = _Fields(obj, ("threat", "assets"), where, path)
    raw = f.req("assets", (list, str))
    if isinstance(raw, str):
        if raw != ALL_ASSETS:
            raise KBParseError(path, f"{where}: 'assets' must be a list of ids or \"{ALL_ASSETS}\"")
        assets = None
    else:
        if not all(isinstance(a, str) for a in raw):
            raise KBParseError(path, f"{where}: 'assets' entries must be strings")
        assets = tuple(raw)
    return AssociationRule(threat=f.req("threat"), assets=assets)


_PARSERS = {
    "sources": _parse_source,
    "levels": _parse_level,
    "categories": _parse_category,
    "assets": _parse_asset,
    "threats": _parse_threat,
    "equivalences": _parse_equivalence,
    "trees": _parse_tree,
    "rules": _parse_rule,
}


def parse_bundle(path: Union[str, Path]) -> KnowledgeBase:
    """Read a bundle directory without validating cross references."""
    root = Path(path)
    if not root.is_dir():
        raise KBError(f"{root}: not a knowledge-base directory")
    parts = {}
    for name, parser in _PARSERS.items():
        file = root / f"{name}.json"
        rows = _read_array(file)
        parts[name] = tuple(parser(obj, f"{file.name}[{i}]", file) for i, obj in enumerate(rows))
    return KnowledgeBase(**parts)


def load_kb(path: Union[str, Path]) -> KnowledgeBase:
    """Load and validate a bundle; raises :class:`KBValidationError` on any violation."""
    kb = parse_bundle(path)
    violations = validate_kb(kb)
    if violations:
        raise KBValidationError(violations)
    return kb


# --------------------------------------------------------------------------
# serialization


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _node_to_json(node: TreeNode) -> dict:
    out = {"id": node.id, "label": node.label, "kind": node.kind.value}
    if node.children:
        out["children"] = [_node_to_json(c) for c in node.children]
    if node.dfd_element is not None:
        out["dfd_element"] = node.dfd_element.value
    if node.category is not None:
        out["category"] = node.category.value
    return out


def kb_to_json(kb: KnowledgeBase) -> dict[str, list]:
    """Bundle contents as ``{file stem: array}``; inverse of :func:`parse_bundle`."""
    return {
        "sources": [{"id": s.id, "description": s.description} for s in kb.sources],
        "levels": [_drop_none({"id": l.id, "label": l.label, "parent": l.parent}) for l in kb.levels],
        "categories": [{"id": c.id, "name": c.name} for c in kb.categories],
        "assets": [
            _drop_none(
                {
                    "id": a.id,
                    "name": a.name,
                    "category": a.category,
                    "source": a.source,
                    "description": a.description,
                    "domain": a.domain,
                }
            )
            for a in kb.assets
        ],
        "threats": [
            _drop_none(
                {
                    "id": t.id,
                    "name": t.name,
                    "description": t.description,
                    "source": t.source,
                    "property": t.property.value,
                    "categories": [c.value for c in t.categories],
                    "agents": [a.value for a in t.agents],
                    "detail": t.detail,
                    "domain": t.domain,
                }
            )
            for t in kb.threats
        ],
        "equivalences": [{"asset": e.asset, "canonical": e.canonical} for e in kb.equivalences],
        "trees": [
            {
                "name": t.name,
                "root": _node_to_json(t.root),
                "cross_links": [{"from": l.source, "to": l.target, "note": l.note} for l in t.cross_links],
            }
            for t in kb.trees
        ],
        "rules": [
            {"threat": r.threat, "assets": ALL_ASSETS if r.assets is None else list(r.assets)} for r in kb.rules
        ],
    }


def save_kb(kb: KnowledgeBase, path: Union[str, Path]) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name, rows in kb_to_json(kb).items():
        text = json.dumps(rows, indent=2, ensure_ascii=False) + "\n"
        (root / f"{name}.json").write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# validation


def _duplicates(kind: str, file: str, ids: Iterable[str]) -> list[Violation]:
    positions: dict[str, list[int]] = defaultdict(list)
    for i, item_id in enumerate(ids):
        positions[item_id].append(i)
    out = []
    for item_id, where in positions.items():
        if len(where) > 1:
            defs = ", ".join(f"{file}[{i}]" for i in where)
            out.append(Violation("duplicate-id", f"duplicate {kind} id '{item_id}' defined at {defs}", (item_id,)))
    return out


def _detail_violations(kb: KnowledgeBase) -> list[Violation]:
    out = []
    parents: dict[str, set] = defaultdict(set)
    for level in kb.levels:
        if level.parent is not None:
            parents[level.id].add(level.parent)
            if level.parent not in kb.level_by_id:
                out.append(
                    Violation("dangling-reference", f"detail level '{level.id}' has unknown parent '{level.parent}'", (level.id,))
                )
    for level_id, ps in parents.items():
        if len(ps) > 1:
            out.append(
                Violation(
                    "non-forest",
                    f"detail level '{level_id}' has more than one hypernym: {', '.join(sorted(ps))}",
                    (level_id,),
                )
            )
    reported: set[str] = set()
    for level in kb.levels:
        seen = [level.id]
        current = kb.level_by_id[level.id].parent
        while current is not None and current in kb.level_by_id:
            if current in seen:
                cycle = seen[seen.index(current):]
                key = min(cycle)
                if key not in reported:
                    reported.add(key)
                    out.append(
                        Violation(
                            "cyclic-detail-hierarchy",
                            f"cyclic detail hierarchy: {' -> '.join(cycle + [current])}",
                            tuple(cycle),
                        )
                    )
                break
            seen.append(current)
            current = kb.level_by_id[current].parent
    return out


def _equivalence_violations(kb: KnowledgeBase) -> list[Violation]:
    out = []
    targets: dict[str, set] = defaultdict(set)
    for eq in kb.equivalences:
        targets[eq.asset].add(eq.canonical)
        for end in (eq.asset, eq.canonical):
            if end not in kb.asset_by_id:
                out.append(
                    Violation("dangling-reference", f"equivalence '{eq.asset}' -> '{eq.canonical}' names unknown asset '{end}'", (end,))
                )
    for asset_id, ts in targets.items():
        if len(ts) > 1:
            out.append(
                Violation(
                    "ambiguous-equivalence",
                    f"asset '{asset_id}' is mapped to several canonical assets: {', '.join(sorted(ts))}",
                    (asset_id,),
                )
            )
    mapping = kb.equivalence_map
    reported: set[str] = set()
    for eq in kb.equivalences:
        if eq.canonical not in mapping:
            continue
        # walk the chain to tell cycles from plain chaining
        seen = [eq.asset]
        current = eq.canonical
        while current in mapping and current not in seen:
            seen.append(current)
            current = mapping[current]
        if current in seen:
            cycle = seen[seen.index(current):]
            key = min(cycle)
            if key not in reported:
                reported.add(key)
                out.append(
                    Violation("cyclic-equivalence", f"cyclic equivalence: {' -> '.join(cycle + [current])}", tuple(cycle))
                )
        elif eq.asset not in reported:
            reported.add(eq.asset)
            out.append(
                Violation(
                    "chained-equivalence",
                    f"equivalence '{eq.asset}' -> '{eq.canonical}' targets an asset that is itself mapped to '{mapping[eq.canonical]}'",
                    (eq.asset, eq.canonical),
                )
            )
    return out


def _tree_violations(kb: KnowledgeBase) -> list[Violation]:
    out = []
    node_ids = []
    for tree in kb.trees:
        for node in tree.root.walk():
            node_ids.append(node.id)
            if node.kind is NodeKind.LEAF and node.children:
                out.append(Violation("malformed-node", f"tree node '{node.id}' is a leaf but has children", (node.id,)))
            if node.kind is not NodeKind.LEAF and not node.children:
                out.append(
                    Violation("malformed-node", f"tree node '{node.id}' is an {node.kind.value.upper()} gate without children", (node.id,))
                )
    out += _duplicates("tree node", "trees.json", node_ids)
    for link in kb.cross_links:
        for end in (link.source, link.target):
            if end not in kb.node_by_id:
                out.append(
                    Violation("dangling-reference", f"cross link '{link.source}' -> '{link.target}' names unknown node '{end}'", (end,))
                )
    return out


def validate_kb(kb: KnowledgeBase) -> list[Violation]:
    """Collect every invariant violation in ``kb``; an empty list means well-formed."""
    out: list[Violation] = []
    out += _duplicates("source", "sources.json", (s.id for s in kb.sources))
    out += _duplicates("detail level", "levels.json", (l.id for l in kb.levels))
    out += _duplicates("asset category", "categories.json", (c.id for c in kb.categories))
    out += _duplicates("asset", "assets.json", (a.id for a in kb.assets))
    out += _duplicates("threat", "threats.json", (t.id for t in kb.threats))
    out += _detail_violations(kb)

    for t in kb.threats:
        if t.source not in kb.source_by_id:
            out.append(Violation("dangling-reference", f"threat '{t.id}' references unknown source '{t.source}'", (t.id,)))
        if t.detail not in kb.level_by_id:
            out.append(Violation("dangling-reference", f"threat '{t.id}' references unknown detail level '{t.detail}'", (t.id,)))
        if not t.agents:
            out.append(Violation("empty-agents", f"threat '{t.id}' has no threat agent", (t.id,)))
        for c in t.categories:
            if c.property is not t.property:
                out.append(
                    Violation(
                        "property-mismatch",
                        f"threat '{t.id}' is {t.property.value} privacy but carries {c.property.value} category '{c.value}'",
                        (t.id,),
                    )
                )
        if not t.name.strip():
            out.append(Violation("empty-name", f"threat '{t.id}' has an empty name", (t.id,)))

    for a in kb.assets:
        if a.category not in kb.category_by_id:
            out.append(Violation("dangling-reference", f"asset '{a.id}' references unknown category '{a.category}'", (a.id,)))
        if a.source not in kb.source_by_id:
            out.append(Violation("dangling-reference", f"asset '{a.id}' references unknown source '{a.source}'", (a.id,)))

    out += _equivalence_violations(kb)
    out += _tree_violations(kb)

    out += _duplicates("association rule threat", "rules.json", (r.threat for r in kb.rules))
    for r in kb.rules:
        if r.threat not in kb.threat_by_id:
            out.append(Violation("dangling-reference", f"association rule references unknown threat '{r.threat}'", (r.threat,)))
        if r.assets is None:
            continue
        if not r.assets:
            out.append(Violation("empty-selector", f"association rule for '{r.threat}' selects no assets", (r.threat,)))
        for asset_id in r.assets:
            if asset_id not in kb.asset_by_id:
                out.append(
                    Violation("dangling-reference", f"association rule for '{r.threat}' references unknown asset '{asset_id}'", (r.threat,))
                )
            elif asset_id in kb.equivalence_map:
                out.append(
                    Violation(
                        "deduplicated-asset",
                        f"association rule for '{r.threat}' references '{asset_id}', which is replaced by "
                        f"'{kb.equivalence_map[asset_id]}' during asset collection",
                        (r.threat,),
                    )
                )
    return out


# --------------------------------------------------------------------------
# level of detail


def is_hypernym_of(kb: KnowledgeBase, a: str, b: str) -> bool:
    """True iff level ``a`` is a strict ancestor of level ``b``."""
    for level_id in (a, b):
        if level_id not in kb.level_by_id:
            raise KeyError(f"unknown detail level '{level_id}'")
    seen = {b}
    current = kb.level_by_id[b].parent
    while current is not None and current not in seen:
        if current == a:
            return True
        seen.add(current)
        level = kb.level_by_id.get(current)
        current = level.parent if level else None
    return False


@dataclass(frozen=True)
class LevelReport:
    """Threat ids grouped by detail level; ``groups`` is empty when all threats agree."""

    groups: tuple[tuple[str, tuple[str, ...]], ...] = ()

    @property
    def consistent(self) -> bool:
        return not self.groups

    def to_json(self) -> dict[str, list[str]]:
        return {level: list(ids) for level, ids in self.groups}


def check_level_consistency(threats: Iterable[Threat]) -> LevelReport:
    groups: dict[str, list[str]] = {}
    for t in threats:
        groups.setdefault(t.detail, []).append(t.id)
    if len(groups) <= 1:
        return LevelReport()
    return LevelReport(tuple((level, tuple(ids)) for level, ids in groups.items()))

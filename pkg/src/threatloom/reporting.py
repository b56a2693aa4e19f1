"""Rendering elicitation results and diffing them against golden tables."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .elicitation import DomainThreat, ElicitationConfig, ElicitationResult
from .kb import check_level_consistency
from .model import Asset, PrivacyProperty, Threat, ThreatAgent, ThreatCategory

ALL_ASSETS_LABEL = "All assets"
ASSET_SEPARATOR = ", "


class ReportFormat(str, Enum):
    MARKDOWN = "markdown"
    CSV = "csv"
    JSON = "json"

    @classmethod
    def from_path(cls, path) -> "ReportFormat":
        suffix = Path(path).suffix.lower()
        return {".md": cls.MARKDOWN, ".csv": cls.CSV, ".json": cls.JSON}.get(suffix, cls.CSV)


class GoldenParseError(ValueError):
    pass


def cell_text(text: str) -> str:
    """Collapse typeset line breaks to single spaces."""
    return re.sub(r"[ \t]*\r?\n[ \t]*", " ", text).strip()


def assets_cell(result: ElicitationResult, row: DomainThreat) -> str:
    if row.all_assets:
        return ALL_ASSETS_LABEL
    return ASSET_SEPARATOR.join(result.asset_names(row.assets))


def _dependent_rows(result: ElicitationResult) -> list[list[str]]:
    rows = []
    for d in result.dependent:
        threat = result.threat(d.threat)
        rows.append([threat.source, cell_text(threat.name), assets_cell(result, d)])
    return rows


def _independent_rows(result: ElicitationResult) -> list[list[str]]:
    return [[t.source, cell_text(t.name)] for t in result.independent]


def _markdown(header: list[str], rows: list[list[str]]) -> str:
    def line(cells):
        return "| " + " | ".join(c.replace("|", "\\|") for c in cells) + " |"

    out = [line(header), "|" + "|".join("---" for _ in header) + "|"]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def _csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _threat_json(t: Threat) -> dict:
    return {
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


def _asset_json(a: Asset) -> dict:
    return {
        "id": a.id,
        "name": a.name,
        "category": a.category,
        "source": a.source,
        "description": a.description,
        "domain": a.domain,
    }


def result_to_json(result: ElicitationResult) -> dict:
    names = {a.id: a.name for a in result.assets}
    sources = {t.id: t.source for t in result.independent}
    threat_names = {t.id: t.name for t in result.independent}
    cfg = result.config
    return {
        "config": {
            "property": cfg.property.value,
            "agents": sorted(a.value for a in cfg.agents),
            "domain": cfg.domain,
            "level": cfg.level,
        },
        "independent": [_threat_json(t) for t in result.independent],
        "assets": [_asset_json(a) for a in result.assets],
        "dependent": [
            {
                "threat": d.threat,
                "source": sources[d.threat],
                "name": threat_names[d.threat],
                "domain": d.domain,
                "all_assets": d.all_assets,
                "assets": list(d.assets),
                "asset_names": [names[i] for i in d.assets],
            }
            for d in result.dependent
        ],
        "uncovered": list(result.uncovered),
        "level_report": result.level_report.to_json(),
    }


def result_from_json(data: dict) -> ElicitationResult:
    """Rebuild a result from :func:`result_to_json` output."""
    cfg = data["config"]
    config = ElicitationConfig(
        property=PrivacyProperty(cfg["property"]),
        domain=cfg["domain"],
        level=cfg["level"],
        agents=frozenset(ThreatAgent(a) for a in cfg["agents"]),
    )
    threats = tuple(
        Threat(
            id=t["id"],
            name=t["name"],
            description=t.get("description", ""),
            source=t["source"],
            property=PrivacyProperty(t["property"]),
            categories=tuple(ThreatCategory(c) for c in t.get("categories", [])),
            agents=tuple(ThreatAgent(a) for a in t["agents"]),
            detail=t["detail"],
            domain=t.get("domain"),
        )
        for t in data["independent"]
    )
    assets = tuple(
        Asset(
            id=a["id"],
            name=a["name"],
            category=a["category"],
            source=a["source"],
            description=a.get("description", ""),
            domain=a.get("domain"),
        )
        for a in data["assets"]
    )
    dependent = tuple(
        DomainThreat(d["threat"], tuple(d["assets"]), d["domain"], bool(d.get("all_assets", False)))
        for d in data["dependent"]
    )
    return ElicitationResult(
        config=config,
        independent=threats,
        assets=assets,
        dependent=dependent,
        uncovered=tuple(data.get("uncovered", ())),
        level_report=check_level_consistency(threats),
    )


def render(result: ElicitationResult, fmt: ReportFormat) -> str:
    """Render the domain-dependent table (Source, Threat, Assets) or the full JSON export."""
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.JSON:
        return json.dumps(result_to_json(result), indent=2, ensure_ascii=False) + "\n"
    header = ["Source", "Threat", "Assets"]
    rows = _dependent_rows(result)
    return _markdown(header, rows) if fmt is ReportFormat.MARKDOWN else _csv(header, rows)


def render_independent(result: ElicitationResult, fmt: ReportFormat) -> str:
    """The step-1 table: Source, Threat."""
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.JSON:
        return json.dumps([_threat_json(t) for t in result.independent], indent=2, ensure_ascii=False) + "\n"
    header = ["Source", "Threat"]
    rows = _independent_rows(result)
    return _markdown(header, rows) if fmt is ReportFormat.MARKDOWN else _csv(header, rows)


# --------------------------------------------------------------------------
# golden diffs


@dataclass(frozen=True)
class GoldenRow:
    source: str
    threat: str
    assets: Optional[tuple[str, ...]] = None  # None for two-column tables

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.threat)


@dataclass
class GoldenDiff:
    missing_rows: list[GoldenRow] = field(default_factory=list)
    extra_rows: list[GoldenRow] = field(default_factory=list)
    changed_rows: list[tuple[GoldenRow, GoldenRow]] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.missing_rows or self.extra_rows or self.changed_rows)

    def lines(self) -> list[str]:
        out = []
        for row in self.missing_rows:
            out.append(f"missing: {row.source} | {row.threat}")
        for row in self.extra_rows:
            out.append(f"extra: {row.source} | {row.threat}")
        for expected, actual in self.changed_rows:
            out.append(f"changed: {expected.source} | {expected.threat}")
            exp, act = set(expected.assets or ()), set(actual.assets or ())
            for name in sorted(exp - act):
                out.append(f"  - {name}")
            for name in sorted(act - exp):
                out.append(f"  + {name}")
        return out


def _split_assets(cell: str) -> list[str]:
    # asset names never contain commas; see ASSET_SEPARATOR
    return [part.strip() for part in cell_text(cell).split(",") if part.strip()]


def _table_rows(header: list[str], body: list[list[str]], where: str) -> tuple[bool, list[tuple[str, str, Optional[str]]]]:
    norm = [h.strip().lower() for h in header]
    if norm[:2] != ["source", "threat"] or norm[2:] not in ([], ["assets"]):
        raise GoldenParseError(f"{where}: expected header 'Source, Threat[, Assets]', got {header!r}")
    with_assets = len(norm) == 3
    rows = []
    for i, cells in enumerate(body, start=2):
        if not any(c.strip() for c in cells):
            continue
        if len(cells) != len(norm):
            raise GoldenParseError(f"{where}: row {i} has {len(cells)} cells, expected {len(norm)}")
        rows.append((cells[0].strip(), cell_text(cells[1]), cells[2] if with_assets else None))
    return with_assets, rows


def _parse_markdown(text: str) -> tuple[bool, list]:
    lines = [l.strip() for l in text.splitlines() if l.strip()]
    if len(lines) < 2:
        raise GoldenParseError("markdown golden: missing header or separator row")

    def cells(line: str) -> list[str]:
        if not (line.startswith("|") and line.endswith("|")):
            raise GoldenParseError(f"markdown golden: not a table row: {line!r}")
        parts = re.split(r"(?<!\\)\|", line[1:-1])
        return [p.strip().replace("\\|", "|") for p in parts]

    if not re.fullmatch(r"\|(\s*:?-+:?\s*\|)+", lines[1]):
        raise GoldenParseError("markdown golden: second line must be a separator row")
    return _table_rows(cells(lines[0]), [cells(l) for l in lines[2:]], "markdown golden")


def _parse_csv(text: str) -> tuple[bool, list]:
    try:
        rows = list(csv.reader(io.StringIO(text), strict=True))
    except csv.Error as exc:
        raise GoldenParseError(f"csv golden: {exc}") from exc
    if not rows:
        raise GoldenParseError("csv golden: empty file")
    return _table_rows(rows[0], rows[1:], "csv golden")


def _parse_json(text: str) -> tuple[bool, list]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GoldenParseError(f"json golden: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    try:
        rows = [
            (d["source"], cell_text(d["name"]), ASSET_SEPARATOR.join(d["asset_names"]), d["asset_names"])
            for d in data["dependent"]
        ]
    except (KeyError, TypeError) as exc:
        raise GoldenParseError(f"json golden: not an elicitation export ({exc})") from exc
    return True, rows


def _parse_golden(text: str, fmt: ReportFormat) -> tuple[bool, list[GoldenRow]]:
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.JSON:
        _, raw = _parse_json(text)
        return True, [GoldenRow(s, t, tuple(names)) for s, t, _, names in raw]
    with_assets, raw = (_parse_markdown if fmt is ReportFormat.MARKDOWN else _parse_csv)(text)
    return with_assets, [GoldenRow(s, t, tuple(_split_assets(a)) if with_assets else None) for s, t, a in raw]


def parse_golden(text: str, fmt: ReportFormat) -> list[GoldenRow]:
    """Parse a golden table into rows; an "All assets" cell stays a one-item tuple."""
    return _parse_golden(text, fmt)[1]


def _expand(assets: tuple[str, ...], every: tuple[str, ...]) -> frozenset[str]:
    if assets == (ALL_ASSETS_LABEL,):
        return frozenset(every)
    return frozenset(assets)


def diff_golden(result: ElicitationResult, golden: str, fmt: ReportFormat) -> GoldenDiff:
    """Row diff keyed by (Source, Threat).

    Asset cells compare as sets, with "All assets" expanded to the result's
    collected assets. Uncovered threats count as rows with an empty asset
    set. A golden file without an Assets column is compared against the
    step-1 threat list instead.
    """
    with_assets, expected = _parse_golden(golden, fmt)
    every = tuple(a.name for a in result.assets)
    two_column = not with_assets
    if two_column:
        actual = [GoldenRow(s, t) for s, t in _independent_rows(result)]
    else:
        actual = []
        for d in result.dependent:
            t = result.threat(d.threat)
            names = (ALL_ASSETS_LABEL,) if d.all_assets else tuple(result.asset_names(d.assets))
            actual.append(GoldenRow(t.source, cell_text(t.name), names))
        # a threat left without a rule still belongs to the table, with no assets
        for threat_id in result.uncovered:
            t = result.threat(threat_id)
            actual.append(GoldenRow(t.source, cell_text(t.name), ()))

    diff = GoldenDiff()
    actual_by_key = {r.key: r for r in actual}
    expected_keys = set()
    for row in expected:
        expected_keys.add(row.key)
        got = actual_by_key.get(row.key)
        if got is None:
            diff.missing_rows.append(row)
        elif not two_column and _expand(row.assets, every) != _expand(got.assets, every):
            diff.changed_rows.append((row, got))
    diff.extra_rows = [r for r in actual if r.key not in expected_keys]
    return diff

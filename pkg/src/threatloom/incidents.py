"""Curated real-world incidents tagged with threats, and occurrence counts."""

from __future__ import annotations

import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .model import KnowledgeBase


class IncidentError(ValueError):
    pass


@dataclass(frozen=True)
class Incident:
    id: str
    date: dt.date
    title: str
    threats: frozenset[str]
    description: str = ""
    source_url: str = ""

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "date": self.date.isoformat(),
            "title": self.title,
            "description": self.description,
            "source_url": self.source_url,
            "threats": sorted(self.threats),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Incident":
        allowed = {"id", "date", "title", "description", "source_url", "threats"}
        if not isinstance(obj, dict):
            raise IncidentError(f"incident must be an object, got {type(obj).__name__}")
        unknown = set(obj) - allowed
        if unknown:
            raise IncidentError(f"incident {obj.get('id', '?')}: unknown field(s) {', '.join(sorted(unknown))}")
        try:
            return cls(
                id=obj["id"],
                date=dt.date.fromisoformat(obj["date"]),
                title=obj["title"],
                description=obj.get("description", ""),
                source_url=obj.get("source_url", ""),
                threats=frozenset(obj["threats"]),
            )
        except KeyError as exc:
            raise IncidentError(f"incident {obj.get('id', '?')}: missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise IncidentError(f"incident {obj.get('id', '?')}: {exc}") from None


@dataclass(frozen=True)
class IncidentStore:
    incidents: tuple[Incident, ...] = ()

    def __len__(self) -> int:
        return len(self.incidents)

    def __iter__(self):
        return iter(self.incidents)

    def get(self, incident_id: str) -> Incident:
        for inc in self.incidents:
            if inc.id == incident_id:
                return inc
        raise KeyError(incident_id)


def add_incident(store: IncidentStore, incident: Incident, kb: KnowledgeBase) -> IncidentStore:
    """Return a new store holding ``incident``; duplicate ids and unknown threats are rejected."""
    if any(inc.id == incident.id for inc in store.incidents):
        raise IncidentError(f"duplicate incident id '{incident.id}'")
    if not incident.threats:
        raise IncidentError(f"incident '{incident.id}' is not tagged with any threat")
    unknown = sorted(t for t in incident.threats if t not in kb.threat_by_id)
    if unknown:
        raise IncidentError(f"incident '{incident.id}' references unknown threat(s): {', '.join(unknown)}")
    return IncidentStore(store.incidents + (incident,))


@dataclass(frozen=True)
class OccurrenceStats:
    counts: dict[str, int]
    ranking: tuple[str, ...]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def occurrence_stats(store: IncidentStore, kb: KnowledgeBase) -> OccurrenceStats:
    """Raw tag counts for every KB threat, ranked by count then threat id."""
    tally = Counter(t for inc in store for t in inc.threats)
    counts = {t.id: tally.get(t.id, 0) for t in kb.threats}
    # tags on threats outside this KB are still counted so the total is conserved
    for threat_id, n in tally.items():
        counts.setdefault(threat_id, n)
    ranking = tuple(sorted(counts, key=lambda t: (-counts[t], t)))
    return OccurrenceStats(counts=counts, ranking=ranking)


def load_incidents(path: Union[str, Path]) -> IncidentStore:
    path = Path(path)
    if not path.exists():
        return IncidentStore()
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IncidentError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, list):
        raise IncidentError(f"{path}: top level must be a JSON array")
    incidents = [Incident.from_json(obj) for obj in data]
    seen: set[str] = set()
    for inc in incidents:
        if inc.id in seen:
            raise IncidentError(f"{path}: duplicate incident id '{inc.id}'")
        seen.add(inc.id)
    return IncidentStore(tuple(incidents))


def save_incidents(store: IncidentStore, path: Union[str, Path]) -> None:
    text = json.dumps([inc.to_json() for inc in store], indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")

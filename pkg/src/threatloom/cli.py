"""Command-line driver.

Exit status: 0 on success, 1 on a domain error (invalid KB, diff mismatch,
missing derivation, rejected incident), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import os
import sys
from pathlib import Path
from typing import Optional, Sequence, TextIO

from .elicitation import ElicitationConfig, ElicitationError, run_pipeline
from .incidents import (
    Incident,
    IncidentError,
    add_incident,
    load_incidents,
    occurrence_stats,
    save_incidents,
)
from .kb import KBError, KBValidationError, load_kb, parse_bundle, validate_kb
from .model import KnowledgeBase, PrivacyProperty, ThreatAgent
from .reporting import (
    GoldenParseError,
    ReportFormat,
    diff_golden,
    render,
    render_independent,
    result_from_json,
)
from .trees import find_derivation, find_tree, format_derivation, sorted_cut_sets

KB_ENV = "THREATLOOM_KB"


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


def _agents(text: str) -> frozenset[ThreatAgent]:
    out = set()
    for raw in text.split(","):
        name = raw.strip().lower().replace("-", "_").replace(" ", "_")
        if not name:
            continue
        if name == "all":
            out.update(ThreatAgent)
            continue
        try:
            out.add(ThreatAgent(name))
        except ValueError:
            allowed = ", ".join(a.value.replace("_", "-") for a in ThreatAgent)
            raise argparse.ArgumentTypeError(f"unknown agent '{raw.strip()}' (expected {allowed} or all)")
    if not out:
        raise argparse.ArgumentTypeError("at least one agent is required")
    return frozenset(out)


def _add_kb(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kb", help=f"knowledge-base bundle directory (default: ${KB_ENV})")


def _add_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--property", choices=[p.value for p in PrivacyProperty], default="soft")
    parser.add_argument("--agents", type=_agents, default=frozenset(ThreatAgent), help="comma-separated agents (default: all)")
    parser.add_argument("--domain", help="domain tag (default: the single domain tagged on the KB's assets)")
    parser.add_argument("--level", help="detail level id or label (default: first level in levels.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="threatloom", description="Combinatoric privacy threat elicitation.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("validate", help="validate a knowledge-base bundle")
    _add_kb(p)

    p = sub.add_parser("elicit", help="run the three-step pipeline and print the threat table")
    _add_kb(p)
    _add_config(p)
    p.add_argument("--format", choices=[f.value for f in ReportFormat], default="markdown")
    p.add_argument("--table", choices=["dependent", "independent"], default="dependent")

    p = sub.add_parser("trees", help="print minimal cut sets or a cross-tree derivation")
    _add_kb(p)
    p.add_argument("--tree", metavar="ROOT", help="only the tree rooted at this node id")
    p.add_argument("--from", dest="start", metavar="NODE")
    p.add_argument("--to", dest="goal", metavar="NODE")

    p = sub.add_parser("report", help="re-render a JSON export")
    p.add_argument("--input", required=True, help="file written by 'elicit --format json'")
    p.add_argument("--format", choices=[f.value for f in ReportFormat], default="markdown")
    p.add_argument("--table", choices=["dependent", "independent"], default="dependent")

    p = sub.add_parser("diff", help="compare the pipeline output with a golden table")
    _add_kb(p)
    _add_config(p)
    p.add_argument("--golden", required=True)
    p.add_argument("--format", choices=[f.value for f in ReportFormat], help="golden format (default: from extension)")

    p = sub.add_parser("incidents", help="incident registry")
    isub = p.add_subparsers(dest="action", metavar="action")
    isub.required = True
    for name, help_text in (("list", "list stored incidents"), ("stats", "occurrence counts per threat"), ("add", "record an incident")):
        q = isub.add_parser(name, help=help_text)
        _add_kb(q)
        q.add_argument("--store", required=True, help="incidents JSON file")
        if name == "add":
            q.add_argument("--id", required=True)
            q.add_argument("--date", required=True, type=dt.date.fromisoformat, help="YYYY-MM-DD")
            q.add_argument("--title", required=True)
            q.add_argument("--description", default="")
            q.add_argument("--url", default="")
            q.add_argument("--threat", action="append", required=True, help="threat id (repeatable)")
    return parser


def _kb_path(args) -> Path:
    path = args.kb or os.environ.get(KB_ENV)
    if not path:
        raise UsageError(f"--kb is required (or set {KB_ENV})")
    return Path(path)


def _load(args) -> KnowledgeBase:
    try:
        return load_kb(_kb_path(args))
    except KBError as exc:
        raise DomainError(str(exc)) from exc


def _config(args, kb: KnowledgeBase) -> ElicitationConfig:
    level = args.level
    if level is None:
        if not kb.levels:
            raise DomainError("knowledge base defines no detail level")
        level = kb.levels[0].id
    elif level not in kb.level_by_id:
        matches = [l.id for l in kb.levels if l.label.lower() == level.lower() or l.id.lower() == level.lower()]
        if not matches:
            raise UsageError(f"unknown detail level '{level}'")
        level = matches[0]
    domain = args.domain
    if domain is None:
        tags = sorted({a.domain for a in kb.assets if a.domain})
        if len(tags) != 1:
            raise UsageError("--domain is required: the KB's assets do not carry exactly one domain tag")
        domain = tags[0]
    return ElicitationConfig(
        property=PrivacyProperty(args.property), domain=domain, level=level, agents=args.agents
    )


def _cmd_validate(args, out, err) -> int:
    try:
        kb = parse_bundle(_kb_path(args))
    except KBError as exc:
        raise DomainError(str(exc)) from exc
    violations = validate_kb(kb)
    if violations:
        for v in violations:
            print(v, file=err)
        print(f"{len(violations)} violation(s)", file=err)
        return 1
    print(f"OK, {len(kb.threats)} threats, {len(kb.assets)} assets", file=out)
    return 0


def _pipeline(args, err):
    kb = _load(args)
    try:
        result = run_pipeline(kb, _config(args, kb))
    except ElicitationError as exc:
        raise DomainError(str(exc)) from exc
    for threat_id in result.uncovered:
        print(f"warning: threat '{threat_id}' has no association rule", file=err)
    for level, ids in result.level_report.groups:
        print(f"warning: mixed detail levels, '{level}': {', '.join(ids)}", file=err)
    return result


def _cmd_elicit(args, out, err) -> int:
    result = _pipeline(args, err)
    fmt = ReportFormat(args.format)
    out.write(render_independent(result, fmt) if args.table == "independent" else render(result, fmt))
    return 0


def _cmd_report(args, out, err) -> int:
    import json

    try:
        result = result_from_json(json.loads(Path(args.input).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError) as exc:
        raise DomainError(f"{args.input}: cannot read elicitation export ({exc})") from exc
    fmt = ReportFormat(args.format)
    out.write(render_independent(result, fmt) if args.table == "independent" else render(result, fmt))
    return 0


def _cmd_diff(args, out, err) -> int:
    result = _pipeline(args, err)
    fmt = ReportFormat(args.format) if args.format else ReportFormat.from_path(args.golden)
    try:
        golden = Path(args.golden).read_text(encoding="utf-8")
        diff = diff_golden(result, golden, fmt)
    except OSError as exc:
        raise DomainError(f"{args.golden}: {exc}") from exc
    except GoldenParseError as exc:
        raise DomainError(f"{args.golden}: {exc}") from exc
    if diff.empty:
        print("match", file=out)
        return 0
    for line in diff.lines():
        print(line, file=out)
    print(
        f"{len(diff.missing_rows)} missing, {len(diff.extra_rows)} extra, {len(diff.changed_rows)} changed",
        file=err,
    )
    return 1


def _cmd_trees(args, out, err) -> int:
    kb = _load(args)
    if (args.start is None) != (args.goal is None):
        raise UsageError("--from and --to must be given together")
    if args.start is not None:
        try:
            steps = find_derivation(kb, args.start, args.goal)
        except KeyError as exc:
            raise DomainError(exc.args[0]) from exc
        if steps is None:
            print(f"no derivation from {args.start} to {args.goal}", file=err)
            return 1
        print(format_derivation(args.start, steps), file=out)
        return 0
    try:
        trees = [find_tree(kb, args.tree)] if args.tree else list(kb.trees)
    except KeyError as exc:
        raise DomainError(exc.args[0]) from exc
    for tree in trees:
        if not args.tree:
            print(f"# {tree.root.id}: {tree.name}", file=out)
        for cut in sorted_cut_sets(tree):
            print(" ".join(cut), file=out)
    return 0


def _cmd_incidents(args, out, err) -> int:
    kb = _load(args)
    try:
        store = load_incidents(args.store)
        if args.action == "add":
            incident = Incident(
                id=args.id,
                date=args.date,
                title=args.title,
                description=args.description,
                source_url=args.url,
                threats=frozenset(args.threat),
            )
            store = add_incident(store, incident, kb)
            save_incidents(store, args.store)
            print(f"added {incident.id} ({len(incident.threats)} threat tag(s))", file=out)
        elif args.action == "list":
            for inc in store:
                print(f"{inc.id}\t{inc.date.isoformat()}\t{inc.title}\t{', '.join(sorted(inc.threats))}", file=out)
        else:
            stats = occurrence_stats(store, kb)
            for threat_id in stats.ranking:
                print(f"{stats.counts[threat_id]}\t{threat_id}", file=out)
    except IncidentError as exc:
        raise DomainError(str(exc)) from exc
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "elicit": _cmd_elicit,
    "report": _cmd_report,
    "diff": _cmd_diff,
    "trees": _cmd_trees,
    "incidents": _cmd_incidents,
}


def run_cli(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None, stderr: Optional[TextIO] = None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    saved = sys.stdout, sys.stderr
    sys.stdout, sys.stderr = out, err  # argparse prints usage/help to the real streams
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    finally:
        sys.stdout, sys.stderr = saved
    try:
        return _COMMANDS[args.command](args, out, err)
    except UsageError as exc:
        parser.print_usage(err)
        print(f"threatloom: error: {exc}", file=err)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=err)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

import json
import shutil
from pathlib import Path

import pytest

from threatloom.kb import load_kb

ROOT = Path(__file__).resolve().parents[1]
SHIPPED = ROOT / "data" / "automotive-soft-privacy"
GOLDEN = ROOT / "golden"
INCIDENTS = ROOT / "data" / "case-study-incidents.json"

_acceptance: list[tuple[str, str, str]] = []


@pytest.fixture(scope="session")
def shipped_kb():
    return load_kb(SHIPPED)


@pytest.fixture
def bundle_copy(tmp_path):
    """Writable copy of the shipped bundle."""
    target = tmp_path / "kb"
    shutil.copytree(SHIPPED, target)
    return target


def write_bundle(path: Path, **files) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    for name, rows in files.items():
        (path / f"{name}.json").write_text(json.dumps(rows), encoding="utf-8")
    return path


def read_rows(bundle: Path, name: str) -> list:
    return json.loads((bundle / f"{name}.json").read_text(encoding="utf-8"))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.append((marker.args[0], report.outcome.upper(), item.name))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome, name in sorted(_acceptance):
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}  ({name})")

from __future__ import annotations

import functools
from pathlib import Path

import pytest

from hstpon.cli import bundled_scenarios
from hstpon.engine import run
from hstpon.scenario import parse_scenario

GOLDEN = Path(__file__).parent / "golden"


@functools.lru_cache(maxsize=None)
def run_bundled(name: str, overrides: tuple[str, ...] = ()):
    """Report of a bundled scenario, computed once per test session."""
    return run(parse_scenario(bundled_scenarios()[name], list(overrides)))


@pytest.fixture(scope="session")
def scenario_paths() -> dict[str, Path]:
    return bundled_scenarios()


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", help="rewrite golden report files")


# one line per acceptance criterion, repeated at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

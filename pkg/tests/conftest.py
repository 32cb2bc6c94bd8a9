from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from irrepair import ir  # noqa: E402
from irrepair.abstraction import apply_abstraction  # noqa: E402
from irrepair.corpus import DEFAULT_ROOT, load_benchmark, load_corpus  # noqa: E402

# criterion id -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c.split()[0])):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}")


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def firewall():
    return load_benchmark(DEFAULT_ROOT / "firewall")


@pytest.fixture(scope="session")
def firewall_abs(firewall):
    return apply_abstraction(firewall.program)


def parse(text: str):
    return ir.parse_program(text)

import pytest

from flowrisk.topology import build_fat_tree

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def topo4():
    return build_fat_tree(4)


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line; printed again in the terminal summary."""
    def record(name: str, ok: bool, detail: str, soft: bool = False):
        tag = "PASS" if ok else ("SOFT-FAIL" if soft else "FAIL")
        line = f"[{tag}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

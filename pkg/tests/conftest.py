from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
TEST_FIXTURES = Path(__file__).resolve().parent / "fixtures"

# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    failed = [
        rep.nodeid.split("::")[-1]
        for rep in terminalreporter.stats.get("failed", [])
        if "test_acceptance" in rep.nodeid
    ]
    if ACCEPTANCE_LINES or failed:
        terminalreporter.section("acceptance checklist")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
        for name in failed:
            terminalreporter.write_line(f"FAIL {name}")


class FakeRandom:
    """Feeds a scripted sequence of uniform draws and counts consumption.

    Duck-types the one method the decoder uses.
    """

    def __init__(self, values):
        self.values = list(values)
        self.consumed = 0

    def random(self):
        if not self.values:
            raise AssertionError("decoder drew more randomness than scripted")
        self.consumed += 1
        return self.values.pop(0)


class QueryLog:
    """Wraps a provider and records every prefix it is asked about."""

    def __init__(self, inner):
        self.inner = inner
        self.prompt = inner.prompt
        self.queries = []

    def next_token_distribution(self, prefix):
        self.queries.append(prefix)
        return self.inner.next_token_distribution(prefix)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def test_fixtures_dir():
    return TEST_FIXTURES

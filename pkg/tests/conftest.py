import pytest

from isqsynth import gates as G

# filled by tests/test_acceptance.py, printed after the run
CRITERIA: dict = {}


@pytest.fixture
def db():
    return G.default_db()


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])

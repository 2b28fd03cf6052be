import pytest

from fhmm_decode.graph import paper_graph


@pytest.fixture(scope="session")
def digits():
    """The bundled 11-word digit graph."""
    return paper_graph()


# Acceptance tests record one verdict line per criterion here; the lines are
# printed in the terminal summary so they survive output capturing.
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])

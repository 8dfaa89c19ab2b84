import pytest

CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store a CriterionResult so the terminal summary can list every criterion."""
    def record(result):
        CRITERIA[result.number] = result
        print(result.line())
        return result
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number].line())

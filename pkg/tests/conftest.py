import pytest

# filled by test_acceptance.report(); echoed after the run so the lines
# survive output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _isolate_output_env(monkeypatch):
    monkeypatch.delenv("SCALINGLAB_OUT", raising=False)

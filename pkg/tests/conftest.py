import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``with report(7, "desk-scale learning") as r: ...; r.detail = "..."``.
    The line is recorded even when the body raises.
    """

    class _Line:
        def __init__(self, number, title):
            self.number, self.title, self.detail = number, title, ""

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            status = "PASS" if exc_type is None else "FAIL"
            detail = self.detail or (str(exc).splitlines()[0] if exc else "")
            line = f"criterion {self.number} {status}: {self.title}" + (f" | {detail}" if detail else "")
            ACCEPTANCE_LINES.append((self.number, line))
            print(line)
            return False

    return _Line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

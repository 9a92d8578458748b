import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one ``criterion N: PASS/FAIL`` line; use as a context manager."""

    class _Report:
        def __init__(self):
            self.number = None
            self.details = []

        def __call__(self, number):
            self.number = number
            return self

        def note(self, text):
            self.details.append(text)

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            status = "PASS" if exc_type is None else "FAIL"
            line = f"criterion {self.number}: {status}"
            if self.details:
                line += " (" + "; ".join(self.details) + ")"
            ACCEPTANCE_LINES.append(line)
            print(line, flush=True)
            return False

    return _Report()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

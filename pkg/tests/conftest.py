import pytest

_acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_record():
    """Collect one pass/fail line per acceptance criterion.

    The lines are echoed in a terminal section after the run so the
    verdicts are visible even when every test passes.
    """
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        tail = f"  [{detail}]" if detail else ""
        _acceptance_lines.append(
            (number, f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}{tail}"))
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_acceptance_lines):
        terminalreporter.write_line(line)

import pytest

# filled by the acceptance module: (criterion, passed, detail)
ACCEPTANCE = []


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((criterion, passed, detail))


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")

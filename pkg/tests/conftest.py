import pytest

from hetcache.model import reference_content, reference_design, reference_phy

_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    """Log one PASS/FAIL line per criterion, shown live and in the summary."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _RESULTS.append(line)
        print(line)
        return ok

    return record


@pytest.fixture
def phy():
    return reference_phy(100.0)


@pytest.fixture
def phy_inf():
    return reference_phy(None)


@pytest.fixture
def content():
    return reference_content()


@pytest.fixture
def design():
    return reference_design()

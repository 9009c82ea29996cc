import pytest

from disevo import kernel as K


@pytest.fixture(autouse=True)
def exact_mode():
    with K.arithmetic("exact"):
        yield


@pytest.fixture
def float_mode():
    with K.arithmetic("float", 1e-10):
        yield


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line; shown in the terminal summary."""

    def record(key, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}"
        _CRITERIA.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

import pytest

_LINES = pytest.StashKey[list]()
_TIMES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = []
    config.stash[_TIMES] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line and the measured runtime of a criterion."""
    def record(number, ok, detail, seconds=None):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        if seconds is not None:
            line += f"  [{seconds:.1f} s]"
            request.config.stash[_TIMES][number] = request.config.stash[_TIMES].get(number, 0.0) + seconds
        request.config.stash[_LINES].append(line)
        print(line)
        return ok
    return record


@pytest.fixture
def criterion_times(request):
    return request.config.stash[_TIMES]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

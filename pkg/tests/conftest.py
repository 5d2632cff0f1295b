import pytest

from crstop.model import ChannelEnsemble, SlotTiming


@pytest.fixture
def timing():
    return SlotTiming(0.05)


@pytest.fixture
def ten_channels():
    """Ten channels, theta = 0.1, unit mean gain."""
    return ChannelEnsemble.homogeneous(10, 0.1, 1.0)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""
    lines = request.config.stash[_VERDICTS]

    def _record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

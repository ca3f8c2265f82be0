import numpy as np
import pytest

from crnwd.crn import Crn, Reaction


@pytest.fixture
def decay_chain():
    """A ->(1) B from {A:1}."""
    crn = Crn(reactions=(Reaction({"A": 1}, {"B": 1}, 1.0),))
    return crn, crn.state(A=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def accept(request, capsys):
    """``accept(n, ok, detail)`` prints one pass/fail line and asserts ``ok``."""
    def record(n, ok, detail):
        line = f"acceptance {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        with capsys.disabled():
            print("\n" + line)
        request.config.stash.setdefault(ACCEPTANCE, []).append(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from cdeaudit.model import EntryBC, ExitBC, InletSignal, TransportProblem


def column(P=10.0, lam=0.0, gamma=0.0, entry="third", exit_="zero-gradient", c_in=None, **kw):
    """Unit column (v = ell = 1) at Peclet number P."""
    return TransportProblem(
        v=1.0,
        D=1.0 / P,
        ell=1.0,
        lam=lam,
        gamma=gamma,
        c_in=InletSignal() if c_in is None else c_in,
        bc_entry=EntryBC(entry),
        bc_exit=None if exit_ is None else ExitBC(exit_),
        **kw,
    )


@pytest.fixture
def danckwerts():
    return column


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

import math
import warnings

import pytest

from isoland.config import RunConfig
from isoland.evolve import run

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record_acceptance(number, title, ok, detail):
    ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


HEAT_KAPPA = 1.0 / (2.0 * math.pi ** 2)


@pytest.fixture(scope="session")
def heat_run():
    """Reference heat case: d=3, gamma=-2, unit Gaussian, n=512, dt=1e-4, t_end=0.1."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run(RunConfig(dt=1e-4, t_end=0.1, monitor_every=10))

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from floatgnc.model import PlatformParams  # noqa: E402
from floatgnc.plan.collocation import default_boundary  # noqa: E402
from floatgnc.plan.planner import PlanOptions, plan_two_phase  # noqa: E402


@pytest.fixture(scope="session")
def params():
    return PlatformParams()


def one_metre(theta_fixed=False, params=PlatformParams()):
    xf = np.zeros(7)
    xf[0] = 1.0
    b = default_boundary(np.zeros(7), xf, params)
    if theta_fixed:
        lo, hi = b.state_lower.copy(), b.state_upper.copy()
        lo[2] = hi[2] = 0.0
        b = type(b)(b.x_init, b.x_final, lo, hi, b.control_lower, b.control_upper)
    return b


@pytest.fixture(scope="session")
def plan_1m(params):
    """Two-phase plan of a 1 m rest-to-rest move, alpha = 1.5."""
    return plan_two_phase(one_metre(params=params), params, PlanOptions(alpha=1.5))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

from __future__ import annotations

import numpy as np
import pytest

from patchy.bvsignal import BVSignal
from patchy.scenario import load_scenario

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def s1():
    return load_scenario("S1")


@pytest.fixture(scope="session")
def s2():
    return load_scenario("S2")


@pytest.fixture(scope="session")
def s2fb():
    return load_scenario("S2-feedback")


@pytest.fixture(scope="session")
def s3():
    return load_scenario("S3")


@pytest.fixture(scope="session")
def tangency():
    return load_scenario("tangency")


@pytest.fixture(scope="session")
def relocation():
    return load_scenario("relocation")


def impulsive_residual(traj, field, w: BVSignal) -> float:
    """Max over rows of ``|y(t) - y0 - int g(y) - (w(t) - w(t0))|``.

    The integral uses the corrected trapezoid rule on every cell, with the
    recorded index and a central-difference Jacobian for ``d/dt g(y)``.
    """
    y0 = traj.states[0]
    w0 = w.eval_left(traj.t0)
    acc = np.zeros_like(y0)
    worst = 0.0

    def ydot(g, t, x, hint):
        return g(x) + w.density(t, hint)

    def gdot(g, t, x, hint):
        v = ydot(g, t, x, hint)
        h = 1e-6
        return (g(x + h * v) - g(x - h * v)) / (2 * h)

    for k in range(1, len(traj)):
        ta, tb = traj.times[k - 1], traj.times[k]
        if tb > ta:
            g = field.patch(int(traj.alphas[k]))
            hint = 0.5 * (ta + tb)
            xa, xb = traj.states[k - 1], traj.states[k]
            h = tb - ta
            acc = acc + 0.5 * h * (g(xa) + g(xb)) + h * h / 12.0 * (gdot(g, ta, xa, hint) - gdot(g, tb, xb, hint))
        wt = w.eval_right(tb) if traj.row_events[k] == "jump" else w.eval_left(tb)
        res = traj.states[k] - y0 - acc - (wt - w0)
        worst = max(worst, float(np.linalg.norm(res)))
    return worst

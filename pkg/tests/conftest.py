"""Acceptance bookkeeping: one pass/fail line per criterion, and a watch on
the synchronisation slack of every recourse solution built during the run."""
import numpy as np
import pytest

from pooledcap import model

SLACK_TOL = 1e-9
ACCEPTANCE = {}     # criterion number -> (ok, detail)
SLACK_WATCH = {"solutions": 0, "min": np.inf, "bad": 0}

_init = model.RecourseSolution.__init__


def _watched_init(self, *args, **kw):
    _init(self, *args, **kw)
    low = min(float(np.min(self.rider_slack, initial=np.inf)),
              float(np.min(self.courier_slack, initial=np.inf)))
    SLACK_WATCH["solutions"] += 1
    SLACK_WATCH["min"] = min(SLACK_WATCH["min"], low)
    SLACK_WATCH["bad"] += int(low < -SLACK_TOL)


model.RecourseSolution.__init__ = _watched_init


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records the outcome and asserts it."""

    def record(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        assert ok, f"criterion {n}: {detail}"
    return record


def _slack_line():
    w = SLACK_WATCH
    ok = w["solutions"] > 0 and w["bad"] == 0
    return ok, (f"{w['solutions']} recourse solutions in this run, min slack {w['min']:.3g}, "
                f"{w['bad']} below -{SLACK_TOL:g}")


def pytest_sessionfinish(session, exitstatus):
    if 10 in ACCEPTANCE:
        ACCEPTANCE[10] = _slack_line()
        if not ACCEPTANCE[10][0] and session.exitstatus == 0:
            session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

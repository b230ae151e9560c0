from __future__ import annotations

import pytest

import forkprof
from forkprof import report as report_mod
from forkprof.profiler import Profiler
from forkprof.sync import set_watchdog

# Every breakdown produced anywhere in the suite is checked against
# ovhds == synch + imbal + limpar + mgmt (seconds and percentages).
BREAKDOWNS_CHECKED = [0]
IDENTITY_VIOLATIONS: list[str] = []
ACCEPTANCE_LINES: list[str] = []


def _audit(rep, where):
    for b in rep.breakdowns():
        BREAKDOWNS_CHECKED[0] += 1
        if not b.identity_holds():
            IDENTITY_VIOLATIONS.append(f"{where}: {b}")
    return rep


@pytest.fixture(autouse=True, scope="session")
def _audit_breakdowns():
    orig_report = Profiler.report
    orig_from_dict = report_mod.report_from_dict

    def report(self, *a, **kw):
        return _audit(orig_report(self, *a, **kw), "Profiler.report")

    def from_dict(data):
        return _audit(orig_from_dict(data), "report_from_dict")

    Profiler.report = report
    report_mod.report_from_dict = from_dict
    yield
    Profiler.report = orig_report
    report_mod.report_from_dict = orig_from_dict


@pytest.fixture(autouse=True)
def _no_identity_violation():
    before = len(IDENTITY_VIOLATIONS)
    yield
    assert IDENTITY_VIOLATIONS[before:] == []


@pytest.fixture(autouse=True)
def _watchdog():
    # Bounded failure instead of a hung suite if a collective is misused.
    set_watchdog(30.0)
    yield
    set_watchdog(None)


@pytest.fixture(scope="session")
def pool():
    p = forkprof.create_pool(8)
    yield p
    p.shutdown()


class _Criterion:
    def __init__(self):
        self.name = None
        self.detail = ""

    def __call__(self, name: str):
        self.name = name
        return self


@pytest.fixture
def criterion(request):
    """Name the acceptance criterion a test checks; set ``.detail`` to report measurements."""
    c = _Criterion()
    request.node.user_properties.append(("criterion", c))
    return c


def pytest_collection_modifyitems(config, items):
    # Suite-wide audits must see every other test's reports first.
    items.sort(key=lambda item: item.get_closest_marker("run_last") is not None)


def pytest_runtest_makereport(item, call):
    if call.when != "call":
        return
    for prop in item.user_properties:
        if prop and prop[0] == "criterion" and prop[1].name:
            c = prop[1]
            ok = call.excinfo is None
            line = f"[{'PASS' if ok else 'FAIL'}] {c.name}"
            ACCEPTANCE_LINES.append(line + (f"  ({c.detail})" if c.detail else ""))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: l.split("] ", 1)[1]):
            terminalreporter.write_line(line)
    terminalreporter.write_line(
        f"overhead identity audited on {BREAKDOWNS_CHECKED[0]} breakdowns, "
        f"{len(IDENTITY_VIOLATIONS)} violations"
    )

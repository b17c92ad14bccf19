import pytest

from cotriage.data_model import MINUTE_MS, Incident, Outage

T60 = 60 * MINUTE_MS
BASE = 1_700_000_000_000

_ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
    _ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_incident(iid, t=BASE, service="svc-a", region="west us 2", title=None, severity=2):
    return Incident(iid, title or f"{service} latency high", service, region, severity, t)


def make_outage(origin="o", t=BASE, region="west us 2", oid="OUT1", rcs=None):
    return Outage(oid, origin, t, region, rcs)

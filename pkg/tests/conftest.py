import re
import time

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_OUTCOMES: dict = {}
_DETAILS: dict = {}


class Checks:
    """Collects named sub-checks of one acceptance criterion so that every
    sub-check runs and is reported even when an earlier one fails."""

    def __init__(self, key):
        self.key = key
        self.items = []
        self.t0 = time.perf_counter()
        _DETAILS[key] = self.items

    def add(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))
        return bool(ok)

    def runtime(self, limit_s):
        dt = time.perf_counter() - self.t0
        return self.add("runtime", dt < limit_s, f"{dt:.1f}s < {limit_s:g}s")

    def verify(self):
        bad = [f"{n}: {d}" for n, ok, d in self.items if not ok]
        assert not bad, "; ".join(bad)


@pytest.fixture
def checks(request):
    return Checks(request.node.name)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _OUTCOMES[key] = (int(m.group(1)), m.group(2), report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key, (num, slug, outcome) in sorted(_OUTCOMES.items(), key=lambda kv: kv[1][0]):
        status = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"criterion {num:02d} {slug}: {status}")
        for name, ok, detail in _DETAILS.get(key, []):
            tr.write_line(f"    [{'ok' if ok else 'FAIL'}] {name}: {detail}")
    n_pass = sum(1 for v in _OUTCOMES.values() if v[2] == "passed")
    tr.write_line(f"{n_pass}/{len(_OUTCOMES)} criteria pass")

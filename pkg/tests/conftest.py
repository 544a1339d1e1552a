"""Shared fixtures and the acceptance-criteria terminal summary.

The expensive artifacts (the full-scan optimal-nested table at n=6765 and the
restricted table at n=10779) are built once per session and shared; their
build times are recorded so the acceptance tests can check the stated
budgets without rebuilding.

Every test named ``test_criterion_<NN>_*`` feeds one line of the acceptance
report printed after the run: criterion number, PASS/FAIL, and a detail
string the test deposits in the ``criterion_notes`` fixture.
"""

from __future__ import annotations

import re
import time

import numpy as np
import pytest

from gtdp import Prevalence, build_r1, build_r3

FLAGSHIP_Q = 0.9999
FLAGSHIP_N = 6765
R3_TOP = 10779

_CRITERION_PATTERN = re.compile(r"test_criterion_(\d+)")

_CRITERIA_TITLES = {
    1: "restricted value E(6765; q=0.9999) = 12.94809 within 1e-5, < 5 s / < 50 MB",
    2: "optimal value H(6765; q=0.9999) = 10.14778 within 1e-5, <= 15 min / <= 1.5 GiB; windowed agrees",
    3: "correction instance: E(10000), E(3235), split penalty",
    4: "first test uses the whole pool for all checked sizes up to 10778",
    5: "n_max(0.9999) = 92099 and n_max(0.5) = 1",
    6: "exhaustive oracles match both tables (n <= 6) and labeled policies find nothing better (n <= 4)",
    7: "entropy floor <= H <= E <= n on the q-grid; floor at the flagship instance",
    8: "Monte Carlo agrees with both tables within 4 stderr; deterministic across workers",
    9: "store round trip bitwise; cache serves correction values; corruption rejected",
    10: "all-negative session uses 1 test; sessions replay probe simulation step for step",
}

# criterion number -> {"passed": bool | None, "detail": str}
_RESULTS: dict[int, dict] = {}
_NOTES: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion_notes() -> dict[int, str]:
    """Mutable map criterion-number -> human-readable outcome detail."""
    return _NOTES


def pytest_runtest_logreport(report):
    match = _CRITERION_PATTERN.search(report.nodeid)
    if not match:
        return
    num = int(match.group(1))
    entry = _RESULTS.setdefault(num, {"passed": True, "skipped": False})
    if report.failed:
        entry["passed"] = False
    if report.skipped:
        entry["skipped"] = True


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_RESULTS):
        entry = _RESULTS[num]
        if entry["skipped"] and entry["passed"]:
            verdict = "SKIP"
        else:
            verdict = "PASS" if entry["passed"] else "FAIL"
        title = _CRITERIA_TITLES.get(num, "")
        terminalreporter.write_line(f"criterion {num:2d}: {verdict} - {title}")
        note = _NOTES.get(num)
        if note:
            for line in note.splitlines():
                terminalreporter.write_line(f"              {line}")


@pytest.fixture(scope="session")
def flagship_q() -> Prevalence:
    return Prevalence(FLAGSHIP_Q)


@pytest.fixture(scope="session")
def r3_flagship(flagship_q):
    """Restricted-procedure table covering n <= 10779, with build seconds."""
    start = time.perf_counter()
    table = build_r3(flagship_q, R3_TOP)
    return table, time.perf_counter() - start


@pytest.fixture(scope="session")
def r1_full(flagship_q):
    """Full-scan optimal-nested table at n=6765, with build seconds.

    A tiny build first forces JIT compilation so the recorded time measures
    the dynamic program, not the compiler.
    """
    build_r1(flagship_q, 32)
    start = time.perf_counter()
    table = build_r1(flagship_q, FLAGSHIP_N)
    return table, time.perf_counter() - start


@pytest.fixture(scope="session")
def r1_windowed(flagship_q):
    """Windowed-scan optimal-nested table at n=6765, with build seconds."""
    build_r1(flagship_q, 32, windowed=True)
    start = time.perf_counter()
    table = build_r1(flagship_q, FLAGSHIP_N, windowed=True)
    return table, time.perf_counter() - start


@pytest.fixture(scope="session")
def shared_cache_dir(tmp_path_factory):
    """One cache directory shared by the persistence and session criteria."""
    return tmp_path_factory.mktemp("gtdp-cache")


@pytest.fixture()
def rng():
    return np.random.default_rng(20260826)

import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from covihawkes.data_model import Level, ModelConfig, RegionId, RegionRecord  # noqa: E402

ACCEPTANCE_RESULTS = []


def make_record(cases, mobility=None, vaccinated=None, population=10_000, start=dt.date(2020, 3, 2), rid="X"):
    cases = np.asarray(cases)
    n = len(cases)
    if mobility is None:
        mobility = np.zeros((n, 6))
    if vaccinated is None:
        vaccinated = np.zeros(n, dtype=int)
    return RegionRecord(RegionId(rid, Level.NATION), cases, mobility, vaccinated, population, start)


@pytest.fixture
def toy():
    """Seeded toy instance: 30 days, L=7, delta=3, hidden 4."""
    rng = np.random.default_rng(3)
    T = 30
    rec = make_record(
        rng.poisson(6, T),
        rng.normal(-10, 15, (T, 6)),
        np.cumsum(rng.integers(0, 5, T)),
        population=10_000,
    )
    return rec, ModelConfig(lag=7, delta=3, hidden=4, seed=1)


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's outcome for the terminal summary."""
    entry = {"name": request.node.name, "label": None, "passed": False}

    def label(text):
        entry["label"] = text

    yield label
    rep = getattr(request.node, "rep_call", None)
    entry["passed"] = bool(rep and rep.passed)
    ACCEPTANCE_RESULTS.append(entry)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for e in sorted(ACCEPTANCE_RESULTS, key=lambda e: e["label"] or e["name"]):
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"[{status}] {e['label'] or e['name']}")

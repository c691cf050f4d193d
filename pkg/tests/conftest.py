import time

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

ACCEPTANCE_COUNT = 9


def pytest_configure(config):
    config._acceptance = {}
    config._session_start = time.perf_counter()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion(request):
    """Record an acceptance outcome so it appears in the terminal summary."""

    def record(number, title, ok, detail=""):
        request.config._acceptance[number] = (title, bool(ok), detail)
        return ok

    return record


@pytest.fixture
def session_elapsed(request):
    return lambda: time.perf_counter() - request.config._session_start


def pytest_terminal_summary(terminalreporter, config):
    results = config._acceptance
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        title, ok, detail = results.get(n, ("not run to completion", False, ""))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{n}] {title}  {detail}")

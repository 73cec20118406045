import numpy as np
import pytest

from gmlab.core import DesignMatrix

_criteria = []


def random_design(rng, n=None, k=None):
    n = n or int(rng.integers(3, 8))
    k = k or int(rng.integers(1, n))
    while True:
        X = rng.normal(size=(n, k))
        s = np.linalg.svd(X, compute_uv=False)
        if s[-1] > 1e-3 * s[0]:
            return DesignMatrix(X)


def random_spd(rng, n):
    B = rng.normal(size=(n, n))
    return B @ B.T + 0.5 * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240229)


@pytest.fixture
def criterion(request):
    """Record a named acceptance criterion's outcome for the summary table."""
    record = {"name": request.node.name, "ok": False}
    _criteria.append(record)
    yield record


def pytest_runtest_makereport(item, call):
    if call.when == "call" and "criterion" in getattr(item, "fixturenames", ()):
        for rec in _criteria:
            if rec["name"] == item.name:
                rec["ok"] = call.excinfo is None


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for rec in _criteria:
        terminalreporter.write_line(f"{'PASS' if rec['ok'] else 'FAIL'}  {rec['name']}")

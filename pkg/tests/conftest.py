import warnings

import numpy as np
import pytest

from rptests.core import standardize


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_problem(rng):
    """Centered standardized design with a sparse signal."""
    n, p = 60, 30
    D = standardize(rng.standard_normal((n, p)))
    beta = np.zeros(p)
    beta[[2, 7, 11]] = [1.5, -2.0, 1.0]
    y = D.values @ beta + rng.standard_normal(n)
    return D, y, beta


@pytest.fixture(autouse=True)
def _quiet_dropped_columns():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="dropped .* curve column", category=RuntimeWarning)
        yield


_ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Log one acceptance line; it is echoed at the end of the run."""

    def _record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} C{criterion}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import math

import numpy as np
import pytest

from eqwm.domain import EquityStandard, NO_EQUITY, NemTariff, make_members

TARIFF = NemTariff(0.4, 0.2)

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def random_instance(rng: np.random.Generator, n_max: int = 3):
    """Small random community with a random equity level (or none)."""
    n = int(rng.integers(1, n_max + 1))
    a = rng.uniform(1, 3, n)
    b = rng.uniform(0.05, 0.5, n)
    g = rng.uniform(0, 15, n) * (rng.random(n) < 0.6)
    x = rng.lognormal(0, 1, n)
    std = EquityStandard(float(rng.uniform(0, 6))) if rng.random() < 0.6 else NO_EQUITY
    return make_members(a, b, g, x), std


def grid_argmax(f, lo: float, hi: float, step: float):
    """Maximizer and value of a vectorized f on an evenly spaced grid."""
    d = np.arange(lo, hi + step / 2, step)
    v = f(d)
    k = int(np.argmax(v))
    return float(d[k]), float(v[k])


@pytest.fixture
def tariff():
    return TARIFF


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

import sys
import gmpy2
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from genfix import _mp
from genfix.gauge_ring import DEFAULT_GRID, EpsGrid, GenNum, make_gauge

settings.register_profile(
    "genfix", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("genfix")

# a coarse grid for tests that only need a handful of samples
SMALL_GRID = EpsGrid(0.5, 1e-9, 16, 0.25)


@pytest.fixture(scope="session")
def grid():
    return DEFAULT_GRID


@pytest.fixture(scope="session")
def small_grid():
    return SMALL_GRID


@pytest.fixture(scope="session")
def gauge():
    return make_gauge("eps")


@pytest.fixture(scope="session")
def drho(gauge):
    return gauge.drho


def power_net(gauge, coeff, exponent, wiggle=0.0, freq=1.0, label=None):
    """``coeff * rho^exponent * (1 + wiggle*sin(freq/eps))`` as a GenNum."""
    c, a, w, k = (_mp.mp(v) for v in (coeff, exponent, wiggle, freq))

    def net(e):
        rho = gauge.rho(e)
        out = np.empty(len(e), dtype=object)
        for i, x in enumerate(e):
            out[i] = c * rho[i] ** a * (1 + w * gmpy2.sin(k / _mp.mp(float(x))))
        return out

    return GenNum(gauge, net, label=label or f"{coeff}*rho^{exponent}")


def random_gennum(gauge, rng):
    coeff = rng.uniform(-5, 5)
    exponent = rng.uniform(-3, 3)
    wiggle = rng.uniform(0, 0.9)
    return power_net(gauge, coeff, exponent, wiggle, rng.uniform(0.5, 3))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

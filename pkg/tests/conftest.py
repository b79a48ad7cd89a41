import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from metaad.discounting import DiscountSpec
from metaad.instances import gen_random, validate

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

E_C = 1.0 / (math.e - 1.0)


def tight_instance(seed, U=None, V=None, max_U=8, max_V=25):
    """Random instance whose budgets are small next to the bids, so they bind."""
    rng = np.random.default_rng(seed)
    U = U or int(rng.integers(2, max_U + 1))
    V = V or int(rng.integers(3, max_V + 1))
    return gen_random(seed, U, V, degree=min(3.0, U), capacity=(2.0, 6.0), load=(1.0, 4.0))


SPECS = [
    DiscountSpec.constant_one(),
    DiscountSpec.classic_small_bid(),
    DiscountSpec.exponential(E_C, 1.0),
    DiscountSpec.exponential(0.3 / math.expm1(0.4), 0.4),
    DiscountSpec.quadratic(),
    DiscountSpec.polynomial([0.5, 0.5]),
    DiscountSpec.polynomial([0.2, 0.3, 0.4]),
]


@pytest.fixture
def two_node():
    return validate([1.0, 1.0], [{0: 0.4, 1: 0.3}, {0: 0.5, 1: 0.5}])


@pytest.fixture
def one_node():
    return validate([1.0], [{0: 0.6}, {0: 0.5}])


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(num, ok, detail):
        line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

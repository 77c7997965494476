"""Shared sampling helpers and the acceptance-criteria summary block."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from weakval_sim.core import PrePostSelection, PureState, QubitState

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def haar_pure(rng) -> PureState:
    v = rng.standard_normal(4)
    return PureState.from_unnormalized(complex(v[0], v[1]), complex(v[2], v[3]))


def haar_pps(rng, min_overlap: float = 0.0) -> PrePostSelection:
    while True:
        pps = PrePostSelection(haar_pure(rng), haar_pure(rng))
        if abs(pps.overlap) > min_overlap:
            return pps


def random_mixed(rng) -> QubitState:
    """Uniform population, coherence uniform inside the positivity disc."""
    r = rng.uniform(0.0, 1.0)
    mag = rng.uniform(0.0, math.sqrt(r * (1.0 - r)))
    ph = rng.uniform(-math.pi, math.pi)
    return QubitState(r, mag * complex(math.cos(ph), math.sin(ph)))


def random_mixed_arrays(rng, n: int):
    """Batch form of random_mixed for the vectorized kernels."""
    r = rng.uniform(0.0, 1.0, n)
    mag = np.sqrt(r * (1.0 - r)) * rng.uniform(0.0, 1.0, n)
    ph = rng.uniform(-math.pi, math.pi, n)
    return r, mag * np.cos(ph), mag * np.sin(ph)


def fibonacci_bloch_grid(n: int):
    """(theta, phi) pairs roughly uniform on the sphere, poles excluded."""
    pts = []
    golden = math.pi * (3.0 - math.sqrt(5.0))
    for k in range(n):
        z = 1.0 - (2.0 * k + 1.0) / n
        pts.append((math.acos(z), math.remainder(golden * k, 2.0 * math.pi)))
    return pts


# One summary line per acceptance criterion, printed after the test table.

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): criterion reported in the summary block"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and rep.when == "call":
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE.append((marker.args[0], rep.passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}"
        if detail:
            line = f"{line}: {detail}"
        terminalreporter.write_line(line)

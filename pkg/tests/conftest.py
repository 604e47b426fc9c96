import time

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("fracmap", deadline=None, max_examples=40)
settings.load_profile("fracmap")


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture(scope="session")
def vortex_ext():
    """Vortex extensions at 32 and 64 nodes per unit over the half-ball of radius 0.55."""
    from fracmap.extension import HalfGridSpec, poisson_extend
    from fracmap.fields import GridSpec, analytic_vortex

    out = {}
    for N in (32, 64):
        u = analytic_vortex(GridSpec.centered(2, 1.5, 1 / N))
        out[N] = poisson_extend(u, HalfGridSpec.uniform(u.spec, 0.55, 0.55))
    return out


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; call with (label, ok, detail) and assert on the result."""
    t0 = time.perf_counter()

    def record(label, ok, detail=""):
        secs = time.perf_counter() - t0
        ACCEPTANCE_LINES.append(f"{label}: {'PASS' if ok else 'FAIL'} ({secs:.1f} s) {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

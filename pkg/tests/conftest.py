import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from siltopo import _backend

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# filled by test_acceptance; printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(params=sorted(_backend.BACKENDS))
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    monkeypatch.setattr(_backend, "kernels", _backend.BACKENDS[request.param])
    monkeypatch.setattr(_backend, "BACKEND", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mask(rng, h, w, density=None):
    p = rng.uniform(0.2, 0.9) if density is None else density
    return (rng.random((h, w)) < p).astype(np.uint8)


def random_blob(rng, h, w, n=None):
    """Union of a few random filled rectangles and discs."""
    yy, xx = np.mgrid[0:h, 0:w]
    m = np.zeros((h, w), bool)
    for _ in range(n or int(rng.integers(1, 4))):
        if rng.random() < 0.5:
            y0, x0 = rng.integers(0, h), rng.integers(0, w)
            m[y0:y0 + rng.integers(1, h // 2 + 2), x0:x0 + rng.integers(1, w // 2 + 2)] = True
        else:
            cy, cx, r = rng.uniform(0, h), rng.uniform(0, w), rng.uniform(1, max(2.0, max(h, w) / 3))
            m |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    return m.astype(np.uint8)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

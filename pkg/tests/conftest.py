import math

import numpy as np
import pytest

from rdbox.geometry import Box3D

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for the acceptance summary."""

    def report(label, ok, detail=""):
        _CRITERIA.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


def random_box(rng, center=3.0, size=(0.5, 5.0)):
    c = rng.uniform(-center, center, 3)
    s = rng.uniform(size[0], size[1], 3)
    return Box3D(*c, *s, rng.uniform(-math.pi, math.pi))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from divinv.geometry import BaseDomain, HoleShape, single_hole_config, validate_config
from divinv.perforated import discretize

# geometry used throughout: a small box with one centered hole
BOX = BaseDomain.box(half_extents=(0.25, 0.25, 0.25))
DELTAS = (1.2, 0.4, 0.7)


def single_hole(eps=0.3, alpha=2.0, base=BOX, deltas=DELTAS, center=None):
    return validate_config(single_hole_config(eps, alpha, deltas, base, HoleShape.ball(1.0), center=center))


@pytest.fixture(scope="session")
def small_disc():
    return discretize(single_hole())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])

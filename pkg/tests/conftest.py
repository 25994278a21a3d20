import sys

import numpy as np
import pytest

from buoywhittle.models import SCENARIOS, Parameters, TWO_PI


def random_theta(rng: np.random.Generator) -> Parameters:
    """A valid parameter vector away from the bounds (sigma_l > sigma_r keeps the width positive)."""
    sigma_r = rng.uniform(0.0, 0.5)
    return Parameters(
        alpha=rng.uniform(0.2, 2.0),
        omega_p=rng.uniform(0.4, 1.5),
        gamma=rng.uniform(1.0, 6.0),
        r=rng.uniform(3.0, 6.0),
        phi_m=rng.uniform(0.0, TWO_PI),
        beta=rng.uniform(0.0, TWO_PI),
        nu=rng.uniform(0.0, 4.0),
        sigma_l=sigma_r + rng.uniform(0.05, 1.0),
        sigma_r=sigma_r,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scenario1():
    return SCENARIOS[1]


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, whatever the capture mode
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from catldp.model import CatastropheKernel, JumpPmf, ModelParams

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def make_params(alpha=1.0, lam=1.0, mu=1.0, probs=(0.0, 1.0), kernel=None):
    return ModelParams(alpha, lam, mu, JumpPmf(np.asarray(probs, dtype=float)),
                       kernel or CatastropheKernel.uniform())


@pytest.fixture
def unit_params():
    return make_params()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

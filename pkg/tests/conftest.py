import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("fronttrack", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fronttrack")

ACCEPTANCE_LINES: list[str] = []

G = 9.81


def subcritical_state(h: float, froude: float, h0: float = 1.0, g: float = G) -> np.ndarray:
    """``(zeta, q)`` with depth ``h`` and Froude number ``froude``."""
    return np.array([h - h0, froude * h * np.sqrt(g * h)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ball_points(n, seed=0, radius=1.0):
    """Uniform sample of the closed 7-ball plus a few sphere points."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, 7))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1 / 7)
    r[: n // 10] = radius
    return g * r[:, None]


def random_boost(seed, norm=0.15):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(7)
    return norm * a / np.linalg.norm(a)


@pytest.fixture
def sample_ball():
    return ball_points(1000, seed=7)


ACCEPTANCE_LINES: list = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

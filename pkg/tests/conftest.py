import numpy as np
import pytest

from auxfdiv.distributions import GaussianMixture


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_mode_target():
    """0.3 N(1, 0.1^2) + 0.7 N(2, 0.5^2)."""
    return GaussianMixture([0.3, 0.7], [1.0, 2.0], [0.1, 0.5])


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report():
    """Record the verdict for one acceptance criterion and fail on FAIL."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])

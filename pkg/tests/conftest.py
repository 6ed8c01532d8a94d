import numpy as np
import pytest

from sigmahom import coefficients as C


@pytest.fixture
def harmonic_medium():
    """1-D, p = 2, g = 2 + sin(2 pi y): effective coefficient sqrt(3)."""
    return C.power_law_model(p=2, g=C.sine_profile(2.0, 1.0))


@pytest.fixture
def example_family():
    """Oscillating flux, drift and noise intensity with K = 4 noise modes."""
    return C.example_family(k_max=4)


@pytest.fixture
def quartic_medium():
    return C.power_law_model(p=4, g=C.sine_profile(1.0, 0.5, fn="cos"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Record one PASS/FAIL line per acceptance criterion (printed in the terminal summary)."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def log(number: int, title: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f" -- {detail}" if detail else "")
        lines.append((number, line))
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

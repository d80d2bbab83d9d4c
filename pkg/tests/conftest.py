import numpy as np
import pytest
from hypothesis import strategies as st

from coopsense.model import SensorSet, SystemParams

DEFAULTS = SystemParams(t_c=0.2, pi0=0.4, gamma=2.0, alpha=0.8)


def random_sensors(rng: np.random.Generator, n: int, lo: float = 0.05, hi: float = 0.45) -> SensorSet:
    return SensorSet.from_arrays(rng.uniform(lo, hi, n), rng.uniform(lo, hi, n))


probs = st.floats(min_value=0.01, max_value=0.99, allow_nan=False)


@st.composite
def sensor_sets(draw, min_n=1, max_n=6):
    n = draw(st.integers(min_n, max_n))
    p_f = draw(st.lists(probs, min_size=n, max_size=n))
    p_m = draw(st.lists(probs, min_size=n, max_size=n))
    return SensorSet.from_arrays(p_f, p_m)


@st.composite
def system_params(draw, alpha=None):
    return SystemParams(
        t_c=draw(st.floats(0.05, 0.95)),
        pi0=draw(st.floats(0.05, 0.95)),
        gamma=draw(st.floats(0.0, 4.0)),
        alpha=draw(st.floats(0.0, 1.0)) if alpha is None else alpha,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance criteria append one line each; they are echoed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

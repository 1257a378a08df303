import numpy as np
import pytest
from hypothesis import strategies as st

from switchrank.survdata import SurvivalDataset


def random_dataset(rng, n=None, tie_grid=None):
    """Two-arm dataset with both arms present and at least one event."""
    n = n if n is not None else int(rng.integers(6, 60))
    arm = rng.integers(0, 2, n)
    arm[:2] = (0, 1)
    time = rng.exponential(10.0, n)
    if tie_grid:
        time = np.ceil(time / tie_grid) * tie_grid
    event = rng.random(n) < 0.7
    event[0] = True
    return SurvivalDataset(time, event, arm)


@st.composite
def datasets(draw, min_size=4, max_size=40, ties=True):
    n = draw(st.integers(min_size, max_size))
    grid = st.integers(1, 30).map(float) if ties else st.floats(0.01, 50, allow_nan=False)
    time = draw(st.lists(grid, min_size=n, max_size=n))
    event = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    arm = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    arm[0], arm[1] = 0, 1
    event[draw(st.integers(0, n - 1))] = True
    return SurvivalDataset(time, event, arm)


@pytest.fixture
def six_subjects():
    # control deaths 1, 4, 6; experimental deaths 2, 5 and a censoring at 7
    return SurvivalDataset([1, 4, 6, 2, 5, 7], [1, 1, 1, 1, 1, 0], [0, 0, 0, 1, 1, 1])


ACCEPTANCE_LINES = {}


def record_criterion(number, title, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])

import numpy as np
import pytest

from velext.grid import Grid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_box_grid():
    return Grid.from_box([-2.0, -2.0], [2.0, 2.0], 81)


ACCEPTANCE = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    """Store a criterion outcome; the terminal summary prints one line each."""
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")

import numpy as np
import pytest

from seaice_lkf.grid import build_quad_grid


@pytest.fixture(scope="session")
def small_grid():
    # 8 x 8 cells on a 64 km box
    return build_quad_grid(64e3, 8e3)


@pytest.fixture(scope="session")
def unit_grid():
    return build_quad_grid(6.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"AC{key:<4} {'PASS' if ok else 'FAIL'}  {detail}")

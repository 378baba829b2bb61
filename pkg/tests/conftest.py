import numpy as np
import pytest

from eml.fields import InitialDataSpec, make_initial_data
from eml.spectral import Grid


@pytest.fixture(scope="session")
def grid32():
    return Grid(32, 8 * np.pi)


@pytest.fixture(scope="session")
def unit_grid():
    # lattice frequencies are integers
    return Grid(32, 2 * np.pi)


@pytest.fixture(scope="session")
def small_state(grid32):
    return make_initial_data(InitialDataSpec(eps_bar=1e-2, seed=1), grid32, 0.5)


def smooth_field(grid, rng, comps=None, width=2.0):
    """Random Gaussian-enveloped smooth field, well inside the box."""
    shape = grid.shape if comps is None else (comps,) + grid.shape
    noise = rng.normal(size=shape)
    k2 = grid.kmag ** 2
    smooth = grid.ifft_real(grid.fft(noise) * np.exp(-k2))
    return smooth * np.exp(-grid.radius ** 2 / (2 * width ** 2))


_ACCEPTANCE = []


@pytest.fixture
def report():
    """``report(n, ok, detail)`` records one acceptance line; the test then asserts ``ok``."""
    def record(n, ok, detail):
        _ACCEPTANCE.append((n, bool(ok), detail))
        print(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")

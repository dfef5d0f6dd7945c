import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from cccpol.config import validate_config


def scan_visibility(e_a, e_b, n=720):
    """Brute-force fringe visibility: scan the relative phase, refine both extrema.

    Independent of the package: intensity is |e_a + e_b exp(i d)|^2 summed over
    components, evaluated on a grid and polished with a bounded scalar search.
    """
    e_a = np.asarray(e_a, complex)
    e_b = np.asarray(e_b, complex)

    def intensity(d):
        return float(np.sum(np.abs(e_a + e_b * np.exp(1j * d)) ** 2))

    grid = np.linspace(0, 2 * np.pi, n, endpoint=False)
    vals = np.array([intensity(d) for d in grid])
    step = grid[1] - grid[0]
    i_hi, i_lo = int(np.argmax(vals)), int(np.argmin(vals))
    hi = -minimize_scalar(lambda d: -intensity(d), bounds=(grid[i_hi] - step, grid[i_hi] + step),
                          method="bounded", options=dict(xatol=1e-12)).fun
    lo = minimize_scalar(intensity, bounds=(grid[i_lo] - step, grid[i_lo] + step),
                         method="bounded", options=dict(xatol=1e-12)).fun
    return (hi - lo) / (hi + lo)


def random_jones(rng, size=None):
    shape = (2,) if size is None else (size, 2)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def short_config(scenario="drift", seed=0, duration=50.0, **run):
    """Default plant and drift with a short run; stretchers start at the nearest crosspoint."""
    data = {
        "seed": seed,
        "scenario": scenario,
        "plant": {"drift_sigma": 0.012124},
        "run": {"duration": duration, **run},
    }
    return validate_config(data)


_CRITERIA: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, passed, detail)."""
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])

import numpy as np
import pytest

from survlime.core import SurvivalDataset, distinct_times, nelson_aalen
from survlime.cox import CoxModel


def random_censored(rng, n, p=3, censor=0.3, ties=False):
    """Small random dataset; with ``ties`` times are drawn from a coarse lattice."""
    X = rng.normal(size=(n, p))
    if ties:
        times = rng.integers(1, max(3, n // 3), size=n).astype(float)
    else:
        times = rng.exponential(10.0, size=n)
    events = (rng.random(n) >= censor).astype(int)
    return SurvivalDataset(X, times, events)


def cox_black_box(dataset, coefficients, gamma=1e-6):
    """Cox model sharing the Nelson-Aalen baseline the explainer builds from ``dataset``."""
    grid = distinct_times(dataset, gamma)
    return CoxModel(np.asarray(coefficients, dtype=float), nelson_aalen(dataset, grid),
                    dataset.feature_names)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def piecewise_linear_cox(dataset, coefficients, num_knots, rng, gamma=1e-6):
    """Cox black box whose baseline is linear between ``num_knots`` grid times.

    Returns the model on the full grid and a predictor reporting only the knot
    times. Linear interpolation of the knot output reproduces the full output.
    """
    from survlime.core import PredictionMatrix, StepFunction, TimeGrid

    grid = distinct_times(dataset, gamma)
    knots = np.unique(np.r_[0, np.sort(rng.choice(np.arange(1, len(grid) - 1),
                                                  num_knots - 2, replace=False)),
                            len(grid) - 1])
    knot_values = np.cumsum(rng.uniform(0.01, 0.2, size=knots.size))
    base = np.interp(grid.times, grid.times[knots], knot_values)
    model = CoxModel(np.asarray(coefficients, dtype=float), StepFunction(grid, base),
                     dataset.feature_names)
    knot_grid = TimeGrid(grid.times[knots], gamma)

    def on_knots(X):
        risk = np.exp(np.asarray(X) @ model.coefficients)
        return PredictionMatrix(knot_grid, risk[:, None] * knot_values[None, :])

    return model, on_knots


# --- acceptance summary ---------------------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.when == "call" or report.failed:
        _CRITERIA[(number, item.name)] = (title, "PASS" if report.passed else "FAIL",
                                          report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, _), (title, status, seconds) in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  ({seconds:.1f} s)")

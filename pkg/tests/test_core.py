import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_censored
from survlime.core import (Kind, PredictionMatrix, StepFunction, SurvivalDataset, TimeGrid,
                           as_cumulative, c_index, chf_to_sf, distinct_times,
                           interpolate_to_grid, nelson_aalen, read_dataset_csv,
                           read_prediction_csv, sf_to_chf, write_dataset_csv,
                           write_prediction_csv)
from survlime.errors import DataError
from survlime.simulate import SET1, RandomSurvivalConfig, generate_times, random_survival_data


# --- oracles ------------------------------------------------------------------

def naive_nelson_aalen(times, events, grid_times):
    """Walk every grid time and count deaths and the risk set from scratch."""
    out, total = [], 0.0
    for t in grid_times:
        deaths = sum(1 for tau, d in zip(times, events) if tau == t and d == 1)
        at_risk = sum(1 for tau in times if tau >= t)
        if deaths:
            total += deaths / at_risk
        out.append(total)
    return np.array(out)


def naive_c_index(risks, times, events):
    concordant = discordant = 0
    n = len(times)
    for i in range(n):
        for j in range(n):
            if events[i] == 1 and times[i] < times[j]:
                if risks[i] > risks[j]:
                    concordant += 1
                elif risks[i] < risks[j]:
                    discordant += 1
    return concordant / (concordant + discordant)


# --- data types ---------------------------------------------------------------

def test_dataset_validation():
    X = np.zeros((3, 2))
    with pytest.raises(DataError, match="length mismatch"):
        SurvivalDataset(X, [1, 2], [1, 0, 1])
    with pytest.raises(DataError, match="exactly 0 or 1"):
        SurvivalDataset(X, [1, 2, 3], [1, 2, 0])
    with pytest.raises(DataError, match=">= 0"):
        SurvivalDataset(X, [1, -2, 3], [1, 1, 0])
    with pytest.raises(DataError, match="non-finite"):
        SurvivalDataset([[0, 1], [np.nan, 1], [1, 1]], [1, 2, 3], [1, 1, 0])
    ds = SurvivalDataset(X, [1, 2, 3], [1, 0, 1])
    assert ds.feature_names == ("x1", "x2")
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_distinct_times_example():
    ds = SurvivalDataset(np.zeros((4, 1)), [2, 1, 2, 3], [1, 1, 0, 1])
    grid = distinct_times(ds, 1e-6)
    np.testing.assert_array_equal(grid.times, [1, 2, 3])
    np.testing.assert_allclose(grid.deltas, [1, 1, 1e-6], rtol=0, atol=1e-18)


def test_distinct_times_degenerate():
    ds = SurvivalDataset(np.arange(4.0)[:, None], [5, 5, 5, 5], [1, 1, 1, 1])
    with pytest.raises(DataError, match="degenerate time grid"):
        distinct_times(ds)


def test_grid_maximum_is_cap_when_reached():
    config = RandomSurvivalConfig(**SET1, seed=3)
    ds = random_survival_data(config, 1000)
    assert distinct_times(ds).times[-1] == ds.times.max() <= 2000
    # force two draws far into the tail so the cap binds
    u = np.full(1000, 0.5)
    u[[7, 400]] = 1e-300
    times = generate_times(ds.features, config, uniforms=u)
    capped = SurvivalDataset(ds.features, times, ds.events)
    assert distinct_times(capped).times[-1] == 2000


def test_time_grid_rejects_unsorted():
    with pytest.raises(DataError):
        TimeGrid([1, 3, 2])
    with pytest.raises(DataError):
        TimeGrid([1, 2], gamma=0)


# --- Nelson-Aalen ---------------------------------------------------------------

def test_nelson_aalen_hand_example():
    ds = SurvivalDataset(np.zeros((4, 1)), [1, 2, 3, 4], [1, 0, 1, 0])
    H = nelson_aalen(ds, distinct_times(ds))
    np.testing.assert_allclose(H.values, [0.25, 0.25, 0.75, 0.75], rtol=0, atol=1e-15)


def test_nelson_aalen_no_events():
    ds = SurvivalDataset(np.zeros((4, 1)), [1, 2, 3, 4], [0, 0, 0, 0])
    np.testing.assert_array_equal(nelson_aalen(ds, distinct_times(ds)).values, 0.0)


def test_nelson_aalen_matches_naive_counter_on_simulated_data():
    ds = random_survival_data(RandomSurvivalConfig(**SET1, seed=11), 1000)
    grid = distinct_times(ds)
    H = nelson_aalen(ds, grid)
    oracle = naive_nelson_aalen(ds.times.tolist(), ds.events.tolist(), grid.times.tolist())
    np.testing.assert_array_equal(H.values, oracle)


@pytest.mark.parametrize("ties", [False, True])
def test_nelson_aalen_matches_naive_counter_random(rng, ties):
    for _ in range(25):
        ds = random_censored(rng, int(rng.integers(4, 60)), p=1, ties=ties)
        grid = distinct_times(ds)
        oracle = naive_nelson_aalen(ds.times.tolist(), ds.events.tolist(), grid.times.tolist())
        np.testing.assert_array_equal(nelson_aalen(ds, grid).values, oracle)


def test_step_function_evaluation():
    grid = TimeGrid([1.0, 2.0, 4.0])
    f = StepFunction(grid, [0.1, 0.3, 0.6])
    np.testing.assert_array_equal(f([0.5, 1.0, 1.5, 2.0, 3.9, 4.0, 9.0]),
                                  [0.0, 0.1, 0.1, 0.3, 0.3, 0.6, 0.6])


# --- CHF / SF conversions ----------------------------------------------------------

def test_zero_hazard_is_full_survival():
    grid = TimeGrid([1, 2, 3])
    sf = chf_to_sf(StepFunction(grid, [0, 0, 0]))
    np.testing.assert_array_equal(sf.values, [1, 1, 1])
    assert sf.kind is Kind.SURVIVAL


def test_exact_logs():
    grid = TimeGrid([1, 2, 3])
    H = sf_to_chf(StepFunction(grid, [1, math.exp(-1), math.exp(-2)], Kind.SURVIVAL))
    np.testing.assert_allclose(H.values, [0, 1, 2], rtol=0, atol=1e-15)
    assert not np.signbit(H.values[0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 0.9, allow_nan=False), min_size=2, max_size=30))
def test_chf_sf_round_trip(increments):
    # totals stay below -ln(1e-12), where the survival clamp is inactive
    values = np.cumsum(increments)
    grid = TimeGrid(np.arange(1.0, len(values) + 1))
    back = sf_to_chf(chf_to_sf(StepFunction(grid, values)))
    np.testing.assert_allclose(back.values, values, rtol=1e-12, atol=1e-12)


def test_sf_clamped_before_log():
    grid = TimeGrid([1, 2])
    H = sf_to_chf(StepFunction(grid, [0.5, 0.0], Kind.SURVIVAL))
    assert H.values[1] == pytest.approx(-math.log(1e-12))


def test_monotonicity_enforced():
    grid = TimeGrid([1, 2, 3])
    with pytest.raises(DataError, match="row 1"):
        PredictionMatrix(grid, [[0, 1, 2], [0, 2, 1]])
    with pytest.raises(DataError, match="non-finite"):
        PredictionMatrix(grid, [[0, np.inf, np.inf]])
    with pytest.raises(DataError):
        PredictionMatrix(grid, [[1.0, 0.9, 1.1]], Kind.SURVIVAL)


def test_as_cumulative_survival_rows():
    grid = TimeGrid([1, 2])
    S = PredictionMatrix(grid, [[0.9, 0.5]], Kind.SURVIVAL)
    np.testing.assert_allclose(as_cumulative(S).rows, [[-math.log(0.9), math.log(2)]])


# --- interpolation ----------------------------------------------------------------

def test_interpolate_midpoint():
    pred = PredictionMatrix(TimeGrid([1, 3]), [[0, 2]])
    out = interpolate_to_grid(pred, TimeGrid([1, 2, 3]))
    np.testing.assert_array_equal(out.rows, [[0, 1, 2]])


def test_interpolate_same_grid_identity():
    pred = PredictionMatrix(TimeGrid([1, 2, 5]), [[0, 1, 3], [1, 1, 1]])
    out = interpolate_to_grid(pred, TimeGrid([1, 2, 5]))
    np.testing.assert_array_equal(out.rows, pred.rows)


def test_interpolate_holds_endpoints():
    pred = PredictionMatrix(TimeGrid([2, 4]), [[1, 3]])
    out = interpolate_to_grid(pred, TimeGrid([0.5, 3, 9]))
    np.testing.assert_array_equal(out.rows, [[1, 2, 3]])


def test_interpolate_preserves_monotonicity(rng):
    for _ in range(50):
        src = np.sort(rng.choice(np.linspace(0, 10, 400), size=12, replace=False))
        rows = np.cumsum(rng.exponential(rng.choice([1e-9, 1.0, 1e6]), size=(5, 12)), axis=1)
        pred = PredictionMatrix(TimeGrid(src), rows)
        target = TimeGrid(np.sort(rng.choice(np.linspace(-1, 11, 999), 40, replace=False)))
        out = interpolate_to_grid(pred, target)
        assert np.all(np.diff(out.rows, axis=1) >= 0)
        at_knots = np.isin(target.times, src)
        np.testing.assert_array_equal(out.rows[:, at_knots],
                                      rows[:, np.isin(src, target.times)])


# --- c-index ------------------------------------------------------------------

def test_c_index_perfect_and_reversed():
    assert c_index([3, 2, 1], [1, 2, 3], [1, 1, 1]) == 1.0
    assert c_index([1, 2, 3], [1, 2, 3], [1, 1, 1]) == 0.0


def test_c_index_hand_example():
    # comparable pairs: (0,1) conc, (0,2) disc, (0,3) tie skipped, (2,3) conc
    risks = [2.0, 1.0, 3.0, 2.0]
    times = [1.0, 2.0, 3.0, 4.0]
    events = [1, 0, 1, 0]
    assert c_index(risks, times, events) == pytest.approx(2 / 3)


def test_c_index_no_comparable_pairs():
    with pytest.raises(DataError, match="no comparable pairs"):
        c_index([1, 2], [1, 2], [0, 0])


def test_c_index_matches_pair_enumeration(rng):
    for trial in range(40):
        n = 50
        times = rng.integers(1, 30, size=n).astype(float) if trial % 2 else rng.exponential(
            5, size=n)
        events = (rng.random(n) >= 0.3).astype(int)
        risks = rng.integers(0, 6, size=n).astype(float)
        assert c_index(risks, times, events) == naive_c_index(risks, times, events)


# --- CSV ------------------------------------------------------------------------

def test_dataset_csv_round_trip(tmp_path, rng):
    ds = random_censored(rng, 20, p=3)
    path = tmp_path / "d.csv"
    with open(path, "w", newline="") as fh:
        write_dataset_csv(ds, fh)
    back = read_dataset_csv(path)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.times, ds.times)
    np.testing.assert_array_equal(back.events, ds.events)


def test_dataset_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DataError, match="time,event"):
        read_dataset_csv(path)


def test_prediction_csv_round_trip(tmp_path):
    pred = PredictionMatrix(TimeGrid([1.5, 2.25]), [[0.1, 0.2], [0.0, 1 / 3]])
    buf = io.StringIO()
    write_prediction_csv(pred, buf)
    path = tmp_path / "p.csv"
    path.write_text(buf.getvalue())
    back = read_prediction_csv(path, "cumulative")
    np.testing.assert_array_equal(back.rows, pred.rows)
    np.testing.assert_array_equal(back.grid.times, pred.grid.times)

"""Survival-analysis primitives: datasets, time grids, step functions, estimators.

Everything here is immutable after construction; arrays are stored as
read-only float64 copies.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError

DEFAULT_GAMMA = 1e-6
SF_CLAMP = 1e-12


class Kind(str, enum.Enum):
    CUMULATIVE_HAZARD = "cumulative_hazard"
    SURVIVAL = "survival"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        aliases = {"cumulative": cls.CUMULATIVE_HAZARD, "chf": cls.CUMULATIVE_HAZARD,
                   "sf": cls.SURVIVAL}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise DataError(f"unknown prediction kind {value!r}") from None


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_monotone(values: np.ndarray, kind: Kind, what: str, finite_checked=False) -> None:
    """Validate CHF/SF shape rules along the last axis."""
    rows = np.atleast_2d(values)
    if not finite_checked and not np.all(np.isfinite(rows)):
        raise DataError(f"{what}: non-finite values")
    if kind is Kind.CUMULATIVE_HAZARD:
        ok = bool(np.all(rows[:, 0] >= 0)) and bool(np.all(rows[:, 1:] >= rows[:, :-1]))
        rule = "non-negative and non-decreasing"
    else:
        ok = (bool(np.all(rows[:, 0] <= 1)) and bool(np.all(rows[:, -1] >= 0))
              and bool(np.all(rows[:, 1:] <= rows[:, :-1])))
        rule = "within [0, 1] and non-increasing"
    if not ok:
        diffs = np.diff(rows, axis=1)
        if kind is Kind.CUMULATIVE_HAZARD:
            bad = np.any(rows < 0, axis=1) | np.any(diffs < 0, axis=1)
        else:
            bad = np.any((rows < 0) | (rows > 1), axis=1) | np.any(diffs > 0, axis=1)
        row = int(np.flatnonzero(bad)[0])
        raise DataError(f"{what}: row {row} is not {rule} as a {kind.value} function")


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored survival data ``{(x_j, tau_j, delta_j)}``.

    Parameters
    ----------
    features : array_like, shape (n, p)
    times : array_like, shape (n,)
        Observed times, finite and non-negative.
    events : array_like, shape (n,)
        1 when the event was observed, 0 when censored.
    feature_names : sequence of str, optional
        Defaults to ``x1 .. xp``.
    """

    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    feature_names: tuple = field(default=())

    def __post_init__(self):
        features = _frozen(self.features, 2, "features")
        times = _frozen(self.times, 1, "times")
        events = np.array(self.events, dtype=np.float64)
        n, p = features.shape
        if p < 1 or n < 2:
            raise DataError(f"dataset needs n >= 2 rows and p >= 1 features, got {n}x{p}")
        if times.shape[0] != n or events.shape != (n,):
            raise DataError(
                f"length mismatch: {n} feature rows, {times.shape[0]} times, {events.size} events")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise DataError("times must be finite and >= 0")
        if not np.all((events == 0) | (events == 1)):
            raise DataError("event indicators must be exactly 0 or 1")
        events = events.astype(np.int8)
        events.setflags(write=False)
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise DataError(f"{len(names)} feature names for {p} features")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "feature_names", tuple(str(s) for s in names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(self.features[rows], self.times[rows], self.events[rows],
                               self.feature_names)

    def with_features(self, features) -> "SurvivalDataset":
        return SurvivalDataset(features, self.times, self.events, self.feature_names)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing times ``t_1 < ... < t_{m+1}`` closed by ``t_{m+1} + gamma``."""

    times: np.ndarray
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        times = _frozen(self.times, 1, "grid times")
        if times.size < 1 or not np.all(np.isfinite(times)):
            raise DataError("grid times must be a non-empty finite vector")
        if np.any(np.diff(times) <= 0):
            raise DataError("grid times must be strictly increasing")
        if not self.gamma > 0:
            raise DataError(f"gamma must be > 0, got {self.gamma}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "gamma", float(self.gamma))

    def __len__(self) -> int:
        return self.times.size

    @property
    def deltas(self) -> np.ndarray:
        """Interval widths ``t_{i+1} - t_i``; the last one is ``gamma``."""
        return np.append(np.diff(self.times), self.gamma)

    def same_as(self, other: "TimeGrid") -> bool:
        return np.array_equal(self.times, other.times)


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function: ``values[i]`` holds on ``[t_i, t_{i+1})``."""

    grid: TimeGrid
    values: np.ndarray
    kind: Kind = Kind.CUMULATIVE_HAZARD

    def __post_init__(self):
        values = _frozen(self.values, 1, "step values")
        kind = Kind.parse(self.kind)
        if values.size != len(self.grid):
            raise DataError(f"{values.size} step values for a grid of {len(self.grid)} times")
        _check_monotone(values, kind, "step function")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", kind)

    def __call__(self, t):
        """Evaluate at arbitrary times; 0 (CHF) or 1 (SF) before the first knot."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.grid.times, t, side="right") - 1
        before = 0.0 if self.kind is Kind.CUMULATIVE_HAZARD else 1.0
        return np.where(idx >= 0, self.values[np.clip(idx, 0, None)], before)


@dataclass(frozen=True)
class PredictionMatrix:
    """Model output: one row per individual, one column per output time."""

    grid: TimeGrid
    rows: np.ndarray
    kind: Kind = Kind.CUMULATIVE_HAZARD

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.ndim != 2 or rows.shape[1] != len(self.grid):
            raise DataError(
                f"prediction has shape {rows.shape}; expected {len(self.grid)} columns")
        if not np.all(np.isfinite(rows)):
            raise DataError("invalid model output: non-finite prediction values")
        kind = Kind.parse(self.kind)
        _check_monotone(rows, kind, "prediction", finite_checked=True)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "kind", kind)

    def _regrid(self, grid: TimeGrid) -> "PredictionMatrix":
        """Same values on an equal grid object, skipping re-validation."""
        out = object.__new__(PredictionMatrix)
        object.__setattr__(out, "grid", grid)
        object.__setattr__(out, "rows", self.rows)
        object.__setattr__(out, "kind", self.kind)
        return out


def distinct_times(dataset: SurvivalDataset, gamma: float = DEFAULT_GAMMA) -> TimeGrid:
    """Sorted unique observed times, censored ones included."""
    times = np.unique(dataset.times)
    if times.size < 2:
        raise DataError("degenerate time grid: fewer than 2 distinct times")
    return TimeGrid(times, gamma)


def nelson_aalen(dataset: SurvivalDataset, grid: TimeGrid) -> StepFunction:
    """Nelson-Aalen cumulative hazard evaluated on ``grid``.

    Tied event times contribute ``d_k / n_k`` once, with ``d_k`` the number of
    events at that time and ``n_k`` the number still at risk (``tau >= t_k``).
    """
    order = np.sort(dataset.times)
    event_times = np.sort(dataset.times[dataset.events == 1])
    at_risk = order.size - np.searchsorted(order, grid.times, side="left")
    deaths = (np.searchsorted(event_times, grid.times, side="right")
              - np.searchsorted(event_times, grid.times, side="left"))
    with np.errstate(divide="ignore", invalid="ignore"):
        increments = np.where(deaths > 0, deaths / np.maximum(at_risk, 1), 0.0)
    return StepFunction(grid, np.cumsum(increments), Kind.CUMULATIVE_HAZARD)


def chf_to_sf(chf: StepFunction) -> StepFunction:
    if chf.kind is not Kind.CUMULATIVE_HAZARD:
        raise DataError("chf_to_sf expects a cumulative hazard step function")
    return StepFunction(chf.grid, np.exp(-chf.values), Kind.SURVIVAL)


def sf_to_chf(sf: StepFunction, eps: float = SF_CLAMP) -> StepFunction:
    if sf.kind is not Kind.SURVIVAL:
        raise DataError("sf_to_chf expects a survival step function")
    return StepFunction(sf.grid, survival_to_hazard(sf.values, eps), Kind.CUMULATIVE_HAZARD)


def survival_to_hazard(values, eps: float = SF_CLAMP) -> np.ndarray:
    """``-ln S`` with S clamped to ``[eps, 1]``; -0.0 is normalised to 0.0."""
    clamped = np.clip(np.asarray(values, dtype=np.float64), eps, 1.0)
    return -np.log(clamped) + 0.0


def as_cumulative(pred: PredictionMatrix, eps: float = SF_CLAMP) -> PredictionMatrix:
    if pred.kind is Kind.CUMULATIVE_HAZARD:
        return pred
    return PredictionMatrix(pred.grid, survival_to_hazard(pred.rows, eps),
                            Kind.CUMULATIVE_HAZARD)


def interpolate_to_grid(pred: PredictionMatrix, target: TimeGrid) -> PredictionMatrix:
    """Linearly interpolate each row onto ``target.times``.

    Outside the source range the endpoint values are held constant. Each output
    value is a convex combination of two neighbouring knots, so row
    monotonicity carries over and values at shared knots are reproduced exactly.
    """
    if pred.grid is target:
        return pred
    if pred.grid.same_as(target):
        return pred._regrid(target)
    src = pred.grid.times
    if src.size < 2:
        raise DataError("interpolation needs a prediction grid of at least 2 times")
    idx = np.clip(np.searchsorted(src, target.times, side="right") - 1, 0, src.size - 2)
    left, right = src[idx], src[idx + 1]
    frac = np.clip((target.times - left) / (right - left), 0.0, 1.0)
    a, b = pred.rows[:, idx], pred.rows[:, idx + 1]
    out = a + frac * (b - a)
    # rounding must not push a value past its knots, or monotonicity breaks
    out = np.clip(out, np.minimum(a, b), np.maximum(a, b))
    out = np.where(frac == 1.0, b, out)
    return PredictionMatrix(target, out, pred.kind)


def c_index(risks, times, events) -> float:
    """Concordance index for right-censored data.

    A pair is comparable when the earlier of the two times is an observed
    event and the times differ. It is concordant when that earlier individual
    has the higher risk score, discordant when it has the lower one; pairs with
    equal risk scores are skipped.
    """
    risks = np.asarray(risks, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events)
    if not (risks.shape == times.shape == events.shape) or risks.ndim != 1:
        raise DataError("risks, times and events must be equal-length vectors")
    concordant = discordant = 0
    event_idx = np.flatnonzero(events == 1)
    for start in range(0, event_idx.size, 512):
        block = event_idx[start:start + 512]
        later = times[None, :] > times[block, None]
        diff = risks[block, None] - risks[None, :]
        concordant += int(np.count_nonzero(later & (diff > 0)))
        discordant += int(np.count_nonzero(later & (diff < 0)))
    if concordant + discordant == 0:
        raise DataError("no comparable pairs")
    return concordant / (concordant + discordant)


# --- CSV formats -----------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def read_dataset_csv(path) -> SurvivalDataset:
    """Read ``<features...>,time,event`` CSV with a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[-2:] != ["time", "event"]:
            raise DataError(f"{path}: header must end with 'time,event', got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.array(rows)
    return SurvivalDataset(data[:, :-2], data[:, -2], data[:, -1], header[:-2])


def write_dataset_csv(dataset: SurvivalDataset, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([*dataset.feature_names, "time", "event"])
    for x, t, d in zip(dataset.features, dataset.times, dataset.events):
        writer.writerow([*map(_fmt, x), _fmt(t), int(d)])


def write_features_csv(features: np.ndarray, feature_names: Sequence[str], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(feature_names))
    for x in np.atleast_2d(features):
        writer.writerow(list(map(_fmt, x)))


def read_features_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(c) for c in row] for row in reader if row]
    return np.array(data, dtype=np.float64).reshape(len(data), len(header)), header


def write_prediction_csv(pred: PredictionMatrix, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(map(_fmt, pred.grid.times)))
    for row in pred.rows:
        writer.writerow(list(map(_fmt, row)))


def read_prediction_csv(path, kind, gamma: float = DEFAULT_GAMMA) -> PredictionMatrix:
    """First row: output times. Remaining rows: one prediction per individual."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: need a times row and at least one prediction row")
    try:
        values = [[float(c) for c in r] for r in rows]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    width = len(values[0])
    if any(len(r) != width for r in values):
        raise DataError(f"{path}: ragged prediction rows")
    return PredictionMatrix(TimeGrid(values[0], gamma), values[1:], Kind.parse(kind))

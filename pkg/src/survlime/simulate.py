"""Synthetic right-censored data with Weibull proportional-hazards times.

Features are uniform in a solid p-ball, event times follow
``tau = (-ln u / (lambda * exp(x' beta)))**(1/nu)`` and event indicators are
independent Bernoulli draws, optionally with all times capped.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import SurvivalDataset
from .errors import UsageError


@dataclass(frozen=True)
class RandomSurvivalConfig:
    center: tuple
    radius: float
    coefficients: tuple
    prob_event: float = 0.9
    lambda_weibull: float = 1e-5
    v_weibull: float = 2.0
    time_cap: float | None = None
    seed: int | None = None

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        coefs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "coefficients", coefs)
        if not center or len(center) != len(coefs):
            raise UsageError(f"center ({len(center)}) and coefficients ({len(coefs)}) "
                             "must be non-empty and of equal length")
        if not self.radius > 0:
            raise UsageError("radius must be > 0")
        if not 0 < self.prob_event < 1:
            raise UsageError("prob_event must lie in (0, 1)")
        if not (self.lambda_weibull > 0 and self.v_weibull > 0):
            raise UsageError("Weibull lambda and v must be > 0")
        if self.time_cap is not None and not self.time_cap > 0:
            raise UsageError("time_cap must be > 0")

    @property
    def p(self) -> int:
        return len(self.center)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _rng(config: RandomSurvivalConfig, rng):
    return rng if rng is not None else np.random.default_rng(config.seed)


def open_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    u = rng.random(size)
    while np.any(zero := u == 0.0):
        u[zero] = rng.random(int(zero.sum()))
    return u


def sample_ball(config: RandomSurvivalConfig, num_points: int, rng=None) -> np.ndarray:
    """Uniform points in the closed ball of radius ``config.radius`` around the center."""
    if num_points < 1:
        raise UsageError("num_points must be >= 1")
    rng = _rng(config, rng)
    p = config.p
    direction = rng.standard_normal((num_points, p))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    # a zero Gaussian vector has probability 0; redraw for safety
    while np.any(bad := norms[:, 0] == 0):
        direction[bad] = rng.standard_normal((int(bad.sum()), p))
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
    radii = config.radius * rng.random((num_points, 1)) ** (1.0 / p)
    return np.asarray(config.center) + direction / norms * radii


def generate_times(features, config: RandomSurvivalConfig, rng=None, uniforms=None) -> np.ndarray:
    """Weibull proportional-hazards times, capped at ``config.time_cap`` when set.

    ``uniforms`` replaces the internal draws (used to pin values in tests).
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != config.p:
        raise UsageError(f"features must be n x {config.p}, got {X.shape}")
    if uniforms is None:
        uniforms = open_uniform(_rng(config, rng), X.shape[0])
    u = np.asarray(uniforms, dtype=np.float64)
    hazard_scale = config.lambda_weibull * np.exp(X @ np.asarray(config.coefficients))
    times = (-np.log(u) / hazard_scale) ** (1.0 / config.v_weibull)
    if config.time_cap is not None:
        times = np.minimum(times, config.time_cap)
    return times


def random_survival_data(config: RandomSurvivalConfig, num_points: int,
                         feature_names=None) -> SurvivalDataset:
    """Features, times and Bernoulli event indicators from one seeded generator."""
    if num_points < 2:
        raise UsageError("num_points must be >= 2")
    rng = np.random.default_rng(config.seed)
    X = sample_ball(config, num_points, rng)
    times = generate_times(X, config, rng)
    events = (rng.random(num_points) < config.prob_event).astype(np.int8)
    return SurvivalDataset(X, times, events, feature_names or ())


class RandomSurvivalData:
    """Object-style wrapper: ``RandomSurvivalData(...).random_survival_data(n)``."""

    def __init__(self, center, radius, coefficients, prob_event, lambda_weibull, v_weibull,
                 time_cap=None, random_seed=None):
        self.config = RandomSurvivalConfig(center, radius, coefficients, prob_event,
                                           lambda_weibull, v_weibull, time_cap, random_seed)

    def random_survival_data(self, num_points):
        ds = random_survival_data(self.config, num_points)
        return np.array(ds.features), np.array(ds.times), np.array(ds.events)


# The two configurations of the ground-truth recovery experiment.
SET1 = dict(center=(0, 0, 0, 0, 0), radius=8, coefficients=(1e-6, 0.1, -0.15, 1e-6, 1e-6),
            prob_event=0.9, lambda_weibull=1e-5, v_weibull=2, time_cap=2000)
SET2 = dict(center=(4, -8, 2, 4, 2), radius=8, coefficients=(1e-6, -0.15, 1e-6, 1e-6, -0.1),
            prob_event=0.9, lambda_weibull=1e-5, v_weibull=2, time_cap=2000)

"""Local surrogate explanations for survival models.

A black box mapping an ``N x p`` matrix to cumulative hazards (or survival
curves) is approximated around ``x*`` by a Cox model whose coefficients are
the explanation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .core import (DEFAULT_GAMMA, Kind, PredictionMatrix, StepFunction, SurvivalDataset,
                   TimeGrid, as_cumulative, distinct_times, interpolate_to_grid, nelson_aalen)
from .errors import DataError, SurvLimeError, UsageError
from .objective import ObjectiveData, parse_norm
from .objective import solve as _solve

Predictor = Callable[[np.ndarray], Union[PredictionMatrix, np.ndarray]]


def default_bandwidth(n: int, p: int) -> float:
    """Normal reference rule ``(4 / (n (p + 2)))**(1 / (p + 4))``."""
    if n < 2 or p < 1:
        raise ValueError("bandwidth rule needs n >= 2 and p >= 1")
    return (4.0 / (n * (p + 2))) ** (1.0 / (p + 4))


@dataclass(frozen=True)
class ExplainerConfig:
    """Explainer settings.

    ``bandwidth=None`` selects the Normal reference rule for the training data;
    ``norm`` is a real order ``k >= 1`` or ``"inf"``.
    """

    num_neighbors: int = 1000
    bandwidth: float | None = None
    norm: float | str = 2.0
    gamma: float = DEFAULT_GAMMA
    chf_clamp: float = 1e-12
    seed: int | None = None
    tol: float = 1e-8
    max_iter: int = 10000

    def __post_init__(self):
        try:
            norm = parse_norm(self.norm)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        object.__setattr__(self, "norm", norm)
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise UsageError(f"bandwidth must be > 0, got {self.bandwidth}")
        if not (self.gamma > 0 and self.chf_clamp > 0):
            raise UsageError("gamma and chf_clamp must be > 0")
        if self.num_neighbors < 1:
            raise UsageError("num_neighbors must be >= 1")

    def check(self, p: int) -> None:
        if self.num_neighbors < p + 2:
            raise UsageError(
                f"degenerate neighborhood: num_neighbors={self.num_neighbors} but at least "
                f"p + 2 = {p + 2} are needed for {p} features; increase N")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["norm"] = "inf" if math.isinf(self.norm) else self.norm
        return doc


@dataclass(frozen=True)
class NeighborSet:
    points: np.ndarray
    weights: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights disagree on N")
        if not np.all((self.weights > 0) & np.isfinite(self.weights)):
            raise DataError("degenerate neighborhood: kernel weights underflow or overflow "
                            "at this bandwidth; adjust the bandwidth")


@dataclass(frozen=True)
class Explanation:
    coefficients: np.ndarray
    objective_value: float
    config_used: ExplainerConfig
    diagnostics: dict = field(default_factory=dict)
    feature_names: tuple = ()

    def to_json(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "coefficients": np.asarray(self.coefficients).tolist(),
            "objective_value": self.objective_value,
            "config": self.config_used.to_json(),
            "diagnostics": dict(self.diagnostics),
        }


@dataclass(frozen=True)
class MonteCarloExplanation:
    per_repetition: np.ndarray
    feature_names: tuple = ()

    @property
    def num_repetitions(self) -> int:
        return self.per_repetition.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.per_repetition.mean(axis=0)

    def to_json(self) -> dict:
        return {"feature_names": list(self.feature_names),
                "mean": self.mean.tolist(),
                "num_repetitions": self.num_repetitions,
                "per_repetition": self.per_repetition.tolist()}


class RepetitionError(SurvLimeError):
    """A Monte-Carlo repetition failed; wraps the original error."""

    def __init__(self, row: int, repetition: int, cause: Exception):
        super().__init__(f"row {row}, repetition {repetition}: {cause}")
        self.row, self.repetition, self.cause = row, repetition, cause
        self.exit_code = getattr(cause, "exit_code", 1)


def feature_scales(dataset: SurvivalDataset) -> np.ndarray:
    sigma = dataset.features.std(axis=0, ddof=1)
    if np.any(sigma == 0):
        cols = [dataset.feature_names[j] for j in np.flatnonzero(sigma == 0)]
        raise DataError(f"constant feature; cannot perturb: {', '.join(cols)}")
    return sigma


def sample_neighbors(center, sigma, bandwidth: float, num: int, rng) -> NeighborSet:
    """Draw ``num`` points from ``N(center, bandwidth**2 diag(sigma**2))``.

    Each weight is that Normal density evaluated at the point.
    """
    center = np.asarray(center, dtype=np.float64)
    scale = bandwidth * np.asarray(sigma, dtype=np.float64)
    z = rng.standard_normal((num, center.size))
    points = center + z * scale
    log_norm = -0.5 * center.size * math.log(2 * math.pi) - np.sum(np.log(scale))
    with np.errstate(over="ignore", under="ignore"):
        weights = np.exp(log_norm - 0.5 * np.sum(z * z, axis=1))
    return NeighborSet(points, weights, center)


def generate_neighbors(center, dataset: SurvivalDataset, config: ExplainerConfig,
                       rng=None) -> NeighborSet:
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (dataset.p,):
        raise DataError(f"data row has {center.size} values, dataset has {dataset.p} features")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    b = config.bandwidth or default_bandwidth(dataset.n, dataset.p)
    return sample_neighbors(center, feature_scales(dataset), b, config.num_neighbors, rng)


def _as_prediction(out, kind: Kind, output_times, grid: TimeGrid) -> PredictionMatrix:
    if isinstance(out, PredictionMatrix):
        return out
    times = grid if output_times is None else output_times
    if not isinstance(times, TimeGrid):
        times = TimeGrid(times, grid.gamma)
    try:
        return PredictionMatrix(times, np.asarray(out, dtype=np.float64), kind)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"invalid model output: {exc}") from None


def build_objective(neighbors: NeighborSet, predict: Predictor, baseline: StepFunction,
                    grid: TimeGrid, config: ExplainerConfig, kind="cumulative",
                    output_times=None) -> ObjectiveData:
    """Query the black box on the neighbours and assemble the objective matrices.

    Survival predictions are turned into cumulative hazards first, then any
    prediction grid differing from ``grid`` is linearly interpolated onto it.
    Hazards below ``chf_clamp`` are raised to it before the logarithm, and
    ``|ln H|`` is floored at ``chf_clamp`` inside ``u = H / ln H``.
    """
    pred = _as_prediction(predict(neighbors.points), Kind.parse(kind), output_times, grid)
    if pred.rows.shape[0] != neighbors.points.shape[0]:
        raise DataError(f"invalid model output: {pred.rows.shape[0]} rows for "
                        f"{neighbors.points.shape[0]} neighbours")
    pred = interpolate_to_grid(as_cumulative(pred), grid)
    eps = config.chf_clamp
    clamped = int(np.count_nonzero(pred.rows < eps))
    V = np.maximum(pred.rows, eps)
    L = np.log(V)
    M2 = np.abs(L)
    clamped += int(np.count_nonzero(M2 < eps))
    np.maximum(M2, eps, out=M2)
    np.divide(V, M2, out=M2)
    np.multiply(M2, M2, out=M2)
    L0 = np.broadcast_to(np.log(np.maximum(baseline.values, eps)), L.shape)
    return ObjectiveData(L0, L, M2, grid.deltas, neighbors.weights, clamped)


def solve(objective: ObjectiveData, neighbors: NeighborSet, config: ExplainerConfig,
          feature_names=()) -> Explanation:
    res = _solve(objective, neighbors.points, config.norm, config.tol, config.max_iter)
    diagnostics = {"solver": res.solver, "iterations": res.iterations,
                   "neighbors_clamped": objective.clamped_entries, "converged": res.converged}
    return Explanation(res.coefficients, max(res.objective_value, 0.0), config, diagnostics,
                       tuple(feature_names))


class SurvLimeExplainer:
    """Explainer bound to a training dataset.

    Parameters
    ----------
    dataset : SurvivalDataset
        Training data; supplies the time grid, the Nelson-Aalen baseline and
        the per-feature spread used for sampling neighbours.
    config : ExplainerConfig, optional
    model_output_times : array_like, optional
        Times at which a predictor returning plain arrays evaluates its output.
    baseline : array_like or StepFunction, optional
        Baseline cumulative hazard on the training grid; Nelson-Aalen by default.
    """

    def __init__(self, dataset: SurvivalDataset, config: ExplainerConfig | None = None,
                 model_output_times=None, baseline=None):
        self.dataset = dataset
        self.config = config or ExplainerConfig()
        self.config.check(dataset.p)
        self.grid = distinct_times(dataset, self.config.gamma)
        if baseline is None:
            self.baseline = nelson_aalen(dataset, self.grid)
        elif isinstance(baseline, StepFunction):
            self.baseline = StepFunction(self.grid, baseline(self.grid.times))
        else:
            self.baseline = StepFunction(self.grid, baseline)
        self.sigma = feature_scales(dataset)
        self.bandwidth = self.config.bandwidth or default_bandwidth(dataset.n, dataset.p)
        self.model_output_times = model_output_times

    def _explain(self, data_row, predict, kind, rng) -> Explanation:
        row = np.asarray(data_row, dtype=np.float64)
        if row.shape != (self.dataset.p,):
            raise DataError(f"data row has {row.size} values, dataset has {self.dataset.p} "
                            "features")
        neighbors = sample_neighbors(row, self.sigma, self.bandwidth,
                                     self.config.num_neighbors, rng)
        objective = build_objective(neighbors, predict, self.baseline, self.grid, self.config,
                                    kind, self.model_output_times)
        return solve(objective, neighbors, self.config, self.dataset.feature_names)

    def explain_instance(self, data_row, predict: Predictor, kind="cumulative") -> Explanation:
        return self._explain(data_row, predict, kind, np.random.default_rng(self.config.seed))

    def montecarlo_explanation(self, data, predict: Predictor, num_repetitions: int = 10,
                               kind="cumulative", n_jobs: int = 1
                               ) -> list[MonteCarloExplanation]:
        """Repeat the explanation with independent neighbour draws for every row.

        Repetition ``j`` of row ``r`` draws from ``SeedSequence(seed,
        spawn_key=(r, j))``, so results do not depend on ``n_jobs``.
        """
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if num_repetitions < 1 or data.shape[0] < 1:
            raise UsageError("need at least one row and one repetition")
        root = np.random.SeedSequence(self.config.seed)

        def run(task):
            r, j = task
            rng = np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(r, j)))
            try:
                return self._explain(data[r], predict, kind, rng).coefficients
            except SurvLimeError as exc:
                raise RepetitionError(r, j, exc) from exc

        tasks = [(r, j) for r in range(data.shape[0]) for j in range(num_repetitions)]
        if n_jobs > 1:
            with ThreadPoolExecutor(n_jobs) as pool:
                betas = list(pool.map(run, tasks))
        else:
            betas = [run(t) for t in tasks]
        betas = np.array(betas).reshape(data.shape[0], num_repetitions, self.dataset.p)
        return [MonteCarloExplanation(b, self.dataset.feature_names) for b in betas]


def explain_instance(data_row, predict: Predictor, dataset: SurvivalDataset,
                     config: ExplainerConfig | None = None, kind="cumulative",
                     model_output_times=None) -> Explanation:
    """Explain one individual: grid, baseline, neighbours, objective, solve."""
    explainer = SurvLimeExplainer(dataset, config, model_output_times)
    return explainer.explain_instance(data_row, predict, kind)


def montecarlo_explanation(data, predict: Predictor, dataset: SurvivalDataset,
                           config: ExplainerConfig | None = None, num_repetitions: int = 10,
                           kind="cumulative", model_output_times=None, n_jobs: int = 1
                           ) -> list[MonteCarloExplanation]:
    explainer = SurvLimeExplainer(dataset, config, model_output_times)
    return explainer.montecarlo_explanation(data, predict, num_repetitions, kind, n_jobs)


def with_seed(config: ExplainerConfig, seed) -> ExplainerConfig:
    return replace(config, seed=seed)

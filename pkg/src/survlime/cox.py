"""Cox proportional hazards model: partial-likelihood fit and CHF prediction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import (DEFAULT_GAMMA, Kind, PredictionMatrix, StepFunction, SurvivalDataset,
                   TimeGrid, distinct_times, nelson_aalen)
from .errors import DataError, FitError

DEFAULT_TOLERANCE = 1e-9
DEFAULT_MAX_ITER = 100
DIVERGENCE_BOUND = 50.0


@dataclass(frozen=True)
class Convergence:
    iterations: int
    final_gradient_norm: float


@dataclass(frozen=True)
class CoxModel:
    """Fitted ``h(x, t) = h0(t) exp(beta' x)``.

    ``baseline_chf`` is the cumulative baseline hazard on the training grid.
    """

    coefficients: np.ndarray
    baseline_chf: StepFunction
    feature_names: tuple = ()
    convergence: Convergence = field(default_factory=lambda: Convergence(0, 0.0))

    def __post_init__(self):
        beta = np.array(self.coefficients, dtype=np.float64)
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise DataError("Cox coefficients must be a finite vector")
        if self.baseline_chf.kind is not Kind.CUMULATIVE_HAZARD:
            raise DataError("baseline must be a cumulative hazard")
        beta.setflags(write=False)
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(beta.size))
        if len(names) != beta.size:
            raise DataError(f"{len(names)} feature names for {beta.size} coefficients")
        object.__setattr__(self, "coefficients", beta)
        object.__setattr__(self, "feature_names", names)

    @property
    def p(self) -> int:
        return self.coefficients.size

    @property
    def grid(self) -> TimeGrid:
        return self.baseline_chf.grid

    def risk_score(self, X) -> np.ndarray:
        """Linear predictor ``beta' x``; ordering equals that of ``exp(beta' x)``."""
        X = _as_matrix(X, self.p)
        return X @ self.coefficients

    def predict_chf(self, X, grid: TimeGrid | None = None) -> PredictionMatrix:
        return predict_chf(self, X, grid)

    def __call__(self, X) -> PredictionMatrix:
        return predict_chf(self, X)

    def to_json(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "coefficients": self.coefficients.tolist(),
            "baseline": {"times": self.grid.times.tolist(),
                         "values": self.baseline_chf.values.tolist()},
            "gamma": self.grid.gamma,
            "convergence": {"iterations": self.convergence.iterations,
                            "final_gradient_norm": self.convergence.final_gradient_norm},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CoxModel":
        try:
            grid = TimeGrid(doc["baseline"]["times"], doc.get("gamma", DEFAULT_GAMMA))
            baseline = StepFunction(grid, doc["baseline"]["values"], Kind.CUMULATIVE_HAZARD)
            conv = doc.get("convergence", {})
            return cls(doc["coefficients"], baseline, tuple(doc["feature_names"]),
                       Convergence(int(conv.get("iterations", 0)),
                                   float(conv.get("final_gradient_norm", 0.0))))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed Cox model document: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "CoxModel":
        return cls.from_json(json.loads(text))


def _as_matrix(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != p:
        raise DataError(f"dimension mismatch: model has {p} features, input has shape {X.shape}")
    return X


def predict_chf(model: CoxModel, X, grid: TimeGrid | None = None) -> PredictionMatrix:
    """``H0(t_i) * exp(beta' x_k)`` for every row ``k`` and grid time ``t_i``.

    Without ``grid`` the model's own training grid is used; otherwise the
    baseline step function is evaluated at the requested times.
    """
    X = _as_matrix(X, model.p)
    grid = model.grid if grid is None else grid
    base = model.baseline_chf.values if grid is model.grid else model.baseline_chf(grid.times)
    rows = np.exp(X @ model.coefficients)[:, None] * base[None, :]
    return PredictionMatrix(grid, rows, Kind.CUMULATIVE_HAZARD)


class _PartialLikelihood:
    """Negative log partial likelihood with Breslow ties, plus derivatives.

    Rows are sorted by time once; risk-set sums are reverse cumulative sums
    read off at the first row of each tied-time block.
    """

    def __init__(self, dataset: SurvivalDataset):
        order = np.lexsort((dataset.events, dataset.times))
        self.X = dataset.features[order]
        times = dataset.times[order]
        self.events = dataset.events[order].astype(bool)
        # index of the first row sharing each row's time: the start of its risk set
        self.risk_start = np.searchsorted(times, times, side="left")

    def _risk_sums(self, beta, order):
        eta = self.X @ beta
        shift = eta.max()
        r = np.exp(eta - shift)
        s0 = np.cumsum(r[::-1])[::-1][self.risk_start]
        out = [eta, shift, s0]
        if order >= 1:
            rx = r[:, None] * self.X
            out.append(np.cumsum(rx[::-1], axis=0)[::-1][self.risk_start])
        if order >= 2:
            rxx = rx[:, :, None] * self.X[:, None, :]
            out.append(np.cumsum(rxx[::-1], axis=0)[::-1][self.risk_start])
        return out

    def value(self, beta) -> float:
        eta, shift, s0 = self._risk_sums(beta, 0)
        d = self.events
        return float(-np.sum(eta[d] - shift - np.log(s0[d])))

    def derivatives(self, beta):
        eta, shift, s0, s1, s2 = self._risk_sums(beta, 2)
        d = self.events
        mean = s1[d] / s0[d, None]
        loss = float(-np.sum(eta[d] - shift - np.log(s0[d])))
        grad = -np.sum(self.X[d] - mean, axis=0)
        hess = np.sum(s2[d] / s0[d, None, None], axis=0) - mean.T @ mean
        return loss, grad, hess


def fit_cox(dataset: SurvivalDataset, tolerance: float = DEFAULT_TOLERANCE,
            max_iter: int = DEFAULT_MAX_ITER, gamma: float = DEFAULT_GAMMA,
            divergence_bound: float = DIVERGENCE_BOUND, baseline: str = "nelson-aalen"
            ) -> CoxModel:
    """Maximise the Cox partial likelihood by damped Newton-Raphson.

    Parameters
    ----------
    dataset : SurvivalDataset
    tolerance : float
        Convergence threshold on the max-norm of the gradient.
    max_iter : int
    gamma : float
        Width of the interval closing the baseline's time grid.
    divergence_bound : float
        Raise once any coefficient exceeds this magnitude (monotone likelihood).
    baseline : {"nelson-aalen", "breslow"}
        Baseline CHF estimator. Nelson-Aalen matches the explainer's own
        baseline; Breslow weights risk sets by ``exp(beta' x)`` the way most
        survival libraries do.

    Returns
    -------
    CoxModel

    Raises
    ------
    FitError
        No events, divergence, or no convergence within ``max_iter``.
    """
    if baseline not in ("nelson-aalen", "breslow"):
        raise ValueError(f"unknown baseline estimator {baseline!r}")
    if not np.any(dataset.events == 1):
        raise FitError("no events to fit")
    lik = _PartialLikelihood(dataset)
    beta = np.zeros(dataset.p)
    loss, grad, hess = lik.derivatives(beta)
    curvature0 = max(float(np.max(np.abs(hess))), np.finfo(float).tiny)
    for iteration in range(max_iter + 1):
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        # a tiny gradient alone is not enough: on a monotone likelihood it
        # vanishes while Newton keeps stepping by ~1 towards infinity
        if (np.max(np.abs(grad)) <= tolerance
                and np.max(np.abs(step)) <= 1e-6 * (1.0 + np.max(np.abs(beta)))):
            _check_flat_directions(beta, hess, curvature0, divergence_bound, iteration)
            break
        if iteration == max_iter:
            raise FitError(f"Cox fit did not converge in {max_iter} iterations "
                           f"(gradient max-norm {np.max(np.abs(grad)):.3g})",
                           coefficients=beta, iterations=iteration)
        scale = 1.0
        for _ in range(60):
            candidate = beta - scale * step
            new_loss = lik.value(candidate)
            if new_loss <= loss + 1e-12 * abs(loss):
                break
            scale *= 0.5
        else:
            raise FitError("line search failed to decrease the partial likelihood",
                           coefficients=beta, iterations=iteration)
        beta = candidate
        if np.max(np.abs(beta)) > divergence_bound:
            raise FitError(f"diverging coefficients: |beta| exceeded {divergence_bound} "
                           "(separable data or monotone likelihood)",
                           coefficients=beta, iterations=iteration + 1)
        loss, grad, hess = lik.derivatives(beta)
    grid = distinct_times(dataset, gamma)
    if baseline == "nelson-aalen":
        base = nelson_aalen(dataset, grid)
    else:
        base = breslow_baseline(dataset, grid, beta)
    return CoxModel(beta, base, dataset.feature_names,
                    Convergence(iteration, float(np.max(np.abs(grad)))))


def _check_flat_directions(beta, hess, curvature0, bound, iterations) -> None:
    """Reject a "maximum" reached only because the likelihood flattened out.

    On a monotone likelihood the gradient underflows to zero at a large but
    finite beta, along a direction where the curvature has also vanished.
    """
    eigval, eigvec = np.linalg.eigh(hess)
    flat = eigval <= 1e-10 * curvature0
    if np.any(np.abs(eigvec[:, flat].T @ beta) > 1e-6):
        raise FitError(f"diverging coefficients: the partial likelihood keeps increasing "
                       f"along a direction of beta (separable data or monotone likelihood); "
                       f"|beta| reached {np.max(np.abs(beta)):.3g} of bound {bound}",
                       coefficients=beta, iterations=iterations)


def breslow_baseline(dataset: SurvivalDataset, grid: TimeGrid, coefficients) -> StepFunction:
    """``H0(t) = sum_{t_k <= t} d_k / sum_{j at risk} exp(beta' x_j)``."""
    r = np.exp(dataset.features @ np.asarray(coefficients, dtype=np.float64))
    order = np.argsort(dataset.times, kind="stable")
    times = dataset.times[order]
    tail = np.append(np.cumsum(r[order][::-1])[::-1], 0.0)
    denom = tail[np.searchsorted(times, grid.times, side="left")]
    event_times = np.sort(dataset.times[dataset.events == 1])
    deaths = (np.searchsorted(event_times, grid.times, side="right")
              - np.searchsorted(event_times, grid.times, side="left"))
    inc = np.where(deaths > 0, deaths / np.where(denom > 0, denom, 1.0), 0.0)
    return StepFunction(grid, np.cumsum(inc), Kind.CUMULATIVE_HAZARD)

"""The local Cox surrogate objective and its solvers.

For neighbours ``e_k`` with kernel weights ``w_k`` the surrogate minimises

    sum_k w_k sum_i u_ki**2 * (ln H_i(e_k) - ln H0(t_i) - beta' e_k)**2 * dt_i

with ``u_ki = H_i(e_k) / ln H_i(e_k)``. Under the squared norm this is weighted
linear least squares and is solved exactly from the normal equations. The
absolute-value and max norms are linear programs, solved exactly by HiGHS;
other orders ``1 < k < inf`` are smooth and use gradient descent started from
the least-squares solution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import SolverError


@dataclass(frozen=True)
class ObjectiveData:
    """Matrices of the objective, all of shape ``(N, m + 1)`` except ``delta_t``."""

    log_baseline: np.ndarray
    log_predictions: np.ndarray
    sq_ratio_weights: np.ndarray
    delta_t: np.ndarray
    neighbor_weights: np.ndarray
    clamped_entries: int = 0

    def __post_init__(self):
        shape = self.log_predictions.shape
        if self.log_baseline.shape != shape or self.sq_ratio_weights.shape != shape:
            raise ValueError("objective matrices must share one shape")
        if self.delta_t.shape != (shape[1],) or self.neighbor_weights.shape != (shape[0],):
            raise ValueError("delta_t / neighbor_weights do not match the matrix shape")
        if np.any(self.delta_t <= 0) or np.any(self.sq_ratio_weights <= 0):
            raise ValueError("interval widths and ratio weights must be positive")

    @cached_property
    def target(self) -> np.ndarray:
        """``ln H_i(e_k) - ln H0(t_i)``, the quantity ``beta' e_k`` has to match."""
        return self.log_predictions - self.log_baseline

    @cached_property
    def cell_weights(self) -> np.ndarray:
        """``w_k * u_ki**2 * dt_i`` for every cell."""
        out = np.multiply(self.sq_ratio_weights, self.neighbor_weights[:, None])
        out *= self.delta_t
        return out


def parse_norm(norm) -> float:
    """Accept a real ``k >= 1`` or ``"inf"``; returns ``math.inf`` for the max-norm."""
    if isinstance(norm, str):
        key = norm.strip().lower()
        if key in ("inf", "infinity", "l_infinity", "linf"):
            return math.inf
        key = key[1:] if key.startswith("l") else key
        try:
            norm = float(key)
        except ValueError:
            raise ValueError(f"unrecognised norm {norm!r}") from None
    norm = float(norm)
    if not norm >= 1:
        raise ValueError(f"norm order must be >= 1 or 'inf', got {norm}")
    return norm


class _Problem:
    """Target and cell weights computed once, for repeated evaluation."""

    def __init__(self, objective: ObjectiveData, points: np.ndarray, norm: float, scale=1.0):
        self.points = np.asarray(points, dtype=np.float64)
        self.target = objective.target
        self.cells = objective.cell_weights / scale
        self.norm = norm
        if math.isinf(norm):
            self.root_cells = np.sqrt(self.cells)

    def residuals(self, beta):
        return self.target - (self.points @ beta)[:, None]

    def value(self, beta) -> float:
        r = self.residuals(beta)
        if self.norm != 2.0:
            np.abs(r, out=r)
        if math.isinf(self.norm):
            return float(np.max(self.root_cells * r))
        if self.norm == 2.0:
            return float(np.einsum("ki,ki,ki->", self.cells, r, r))
        return float(np.sum(self.cells * r ** self.norm))

    def gradient(self, beta) -> np.ndarray:
        r = self.residuals(beta)
        if math.isinf(self.norm):
            scaled = self.root_cells * np.abs(r)
            k, i = np.unravel_index(np.argmax(scaled), scaled.shape)
            return -self.root_cells[k, i] * np.sign(r[k, i]) * self.points[k]
        if self.norm == 1.0:
            per_cell = self.cells * np.sign(r)
        else:
            per_cell = self.cells * self.norm * np.abs(r) ** (self.norm - 1.0) * np.sign(r)
        return -(per_cell.sum(axis=1) @ self.points)


def residuals(beta, objective: ObjectiveData, points: np.ndarray) -> np.ndarray:
    return objective.target - (np.asarray(points) @ np.asarray(beta, dtype=np.float64))[:, None]


def objective_value(beta, objective: ObjectiveData, points: np.ndarray, norm=2.0) -> float:
    """Objective at ``beta``; for order ``k`` the squared residual becomes ``|r|**k``.

    The max-norm variant is ``max_{k,i} sqrt(w_k u_ki**2 dt_i) * |r_ki|``.
    """
    problem = _Problem(objective, points, parse_norm(norm))
    return problem.value(np.asarray(beta, dtype=np.float64))


def objective_gradient(beta, objective: ObjectiveData, points: np.ndarray, norm=2.0) -> np.ndarray:
    """Gradient (or a subgradient where the objective has a kink) in ``beta``."""
    problem = _Problem(objective, points, parse_norm(norm))
    return problem.gradient(np.asarray(beta, dtype=np.float64))


@dataclass(frozen=True)
class SolveResult:
    coefficients: np.ndarray
    objective_value: float
    solver: str
    iterations: int
    converged: bool


def solve_least_squares(objective: ObjectiveData, points: np.ndarray) -> np.ndarray:
    """Exact minimiser of the squared-norm objective via the normal equations.

    Every cell of row ``k`` shares the design row ``e_k``, so the cells collapse
    to one weighted observation per neighbour: weight ``sum_i c_ki`` and target
    the ``c``-weighted mean of the row.
    """
    c = objective.cell_weights
    row_weight = c.sum(axis=1)
    row_target = np.einsum("ki,ki->k", c, objective.target) / row_weight
    row_weight = row_weight / np.max(row_weight)
    weighted = points * row_weight[:, None]
    gram = points.T @ weighted
    rhs = weighted.T @ row_target
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(rhs))):
        raise SolverError("non-finite normal equations; check the model output and weights")
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 1e-12 * max(eig[-1], np.finfo(float).tiny):
        raise SolverError(
            f"degenerate neighborhood; increase N or bandwidth "
            f"(normal matrix rank-deficient, eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})")
    chol = np.linalg.cholesky(gram)

    def chol_solve(b):
        return np.linalg.solve(chol.T, np.linalg.solve(chol, b))

    beta = chol_solve(rhs)
    # refine against residuals of the observations themselves, not of the
    # normal equations, to recover digits lost to squaring the conditioning
    for _ in range(2):
        beta = beta + chol_solve(weighted.T @ (row_target - points @ beta))
    return beta


def _descend_smooth(f, grad, beta, tol, max_iter):
    """Gradient descent with Barzilai-Borwein steps and Armijo backtracking."""
    fx, g = f(beta), grad(beta)
    step = 1.0 / max(np.linalg.norm(g), 1e-300)
    prev = None
    for it in range(1, max_iter + 1):
        if prev is not None:
            s, y = beta - prev[0], g - prev[1]
            sy = float(s @ y)
            if sy > 0:
                step = float(s @ s) / sy
        gg = float(g @ g)
        if gg == 0.0:
            return beta, it, True
        while True:
            cand = beta - step * g
            fc = f(cand)
            if fc <= fx - 1e-4 * step * gg or step < 1e-300:
                break
            step *= 0.5
        prev = (beta, g)
        improvement = fx - fc
        beta, fx, g = cand, fc, grad(cand)
        if improvement <= tol * max(abs(fx), 1e-300):
            return beta, it, True
    return beta, max_iter, False


def _sparse_design(points: np.ndarray, m: int, row_scale=None):
    """CSR matrix repeating each neighbour row ``m`` times (one row per cell)."""
    N, p = points.shape
    data = np.repeat(points, m, axis=0)
    if row_scale is not None:
        data *= row_scale[:, None]
    indptr = np.arange(0, N * m * p + 1, p)
    indices = np.tile(np.arange(p), N * m)
    return sparse.csr_matrix((data.ravel(), indices, indptr), shape=(N * m, p))


def _linear_program(objective: ObjectiveData, points: np.ndarray, norm: float):
    """Exact minimiser for the absolute-value and max norms, both linear programs.

    Absolute value: ``min sum c (r+ + r-)`` with ``X beta + r+ - r- = y``.
    Max: ``min t`` with ``-t <= sqrt(c) (y - X beta) <= t``.
    """
    y = objective.target.ravel()
    c = objective.cell_weights.ravel()
    n_cells, p = y.size, points.shape[1]
    m = objective.target.shape[1]
    free = [(None, None)] * p
    if norm == 1.0:
        eye = sparse.identity(n_cells, format="csr")
        A = sparse.hstack([_sparse_design(points, m), eye, -eye], format="csr")
        cost = np.concatenate([np.zeros(p), c, c]) / np.max(c)
        res = linprog(cost, A_eq=A, b_eq=y, bounds=free + [(0, None)] * (2 * n_cells),
                      method="highs")
    else:
        root = np.sqrt(c)
        root /= np.max(root)
        X = _sparse_design(points, m, root)
        ones = sparse.csr_matrix(np.ones((n_cells, 1)))
        A = sparse.vstack([sparse.hstack([-X, -ones]), sparse.hstack([X, -ones])],
                          format="csr")
        b = np.concatenate([-root * y, root * y])
        res = linprog(np.r_[np.zeros(p), 1.0], A_ub=A, b_ub=b, bounds=free + [(0, None)],
                      method="highs")
    if res.status != 0:
        raise SolverError(f"linear program failed: {res.message}")
    return res.x[:p], int(res.nit)


def solve(objective: ObjectiveData, points: np.ndarray, norm=2.0, tol: float = 1e-8,
          max_iter: int = 10000) -> SolveResult:
    """Minimise the objective for the requested norm.

    Raises
    ------
    SolverError
        When the neighbourhood cannot determine all coefficients, or the
        linear program fails.
    """
    norm = parse_norm(norm)
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] != objective.log_predictions.shape[0]:
        raise SolverError("objective and neighbour set disagree on N")
    beta = solve_least_squares(objective, points)
    if norm == 2.0:
        return SolveResult(beta, objective_value(beta, objective, points, 2.0),
                           "normal-equations", 1, True)

    if norm == 1.0 or math.isinf(norm):
        beta, iters = _linear_program(objective, points, norm)
        return SolveResult(beta, objective_value(beta, objective, points, norm),
                           "linear-program", iters, True)

    # positive rescaling leaves the argmin unchanged and keeps magnitudes sane
    scale = objective_value(beta, objective, points, norm) or 1.0
    problem = _Problem(objective, points, norm, scale)
    beta, iters, ok = _descend_smooth(problem.value, problem.gradient, beta, tol, max_iter)
    label = "gradient-descent"
    if not ok:
        warnings.warn(f"{label} hit the iteration limit ({max_iter}); returning best iterate",
                      RuntimeWarning, stacklevel=2)
    return SolveResult(beta, objective_value(beta, objective, points, norm), label, iters, ok)

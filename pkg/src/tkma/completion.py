"""Nuclear-norm constrained matrix completion.

Minimise ``f(X) = 1/2 ||P_Omega(X - A)||_F^2`` subject to
``||X||_* <= r``.  The projected-gradient map
``T3 = P_C(I - step * grad f)`` is averaged for ``step`` in ``(0, 2)``.
Matrices are flattened row-major when handed to the fixed-point core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, Operator
from .prox import project_nuclear_ball
from .rng import RngState, gaussian_array, sample_without_replacement


@dataclass(frozen=True)
class ObservationMask:
    """Observed positions of an ``n x n`` matrix.

    ``indices`` are row-major linear indices in draw order.
    """

    n: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n * self.n):
            raise ValueError("mask index out of range")
        if np.unique(idx).size != idx.size:
            raise ValueError("mask indices must be distinct")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        m = np.zeros(self.n * self.n, dtype=bool)
        m[idx] = True
        m = m.reshape(self.n, self.n)
        m.setflags(write=False)
        object.__setattr__(self, "_dense", m)

    @property
    def dense(self) -> np.ndarray:
        return self._dense

    @property
    def observed(self) -> set:
        return {(int(i) // self.n, int(i) % self.n) for i in self.indices}

    def __len__(self):
        return int(self.indices.size)

    @classmethod
    def full(cls, n: int) -> ObservationMask:
        return cls(n, np.arange(n * n))


@dataclass(frozen=True)
class CompletionProblem:
    truth: np.ndarray
    mask: ObservationMask
    r: float
    step: float = 1.99

    def __post_init__(self):
        A = np.array(self.truth, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != self.mask.n:
            raise DimensionError(f"truth must be {self.mask.n}x{self.mask.n}, got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("truth has non-finite entries")
        if not self.r > 0:
            raise ValueError(f"radius must be positive, got {self.r}")
        if not 0 < self.step < 2:
            raise ValueError(f"step must lie in (0, 2), got {self.step}")
        A.setflags(write=False)
        object.__setattr__(self, "truth", A)

    @property
    def n(self) -> int:
        return self.mask.n

    def operator(self, alpha: float = 0.5, svd_method: str = "lapack") -> Operator:
        n = self.n

        def fn(x):
            return t3_apply(x.reshape(n, n), self, svd_method).reshape(-1)

        return Operator(fn, n * n, alpha, "T3")


def generate_problem(n: int, rank: int, fraction: float, rng: RngState,
                     r: float | None = None, step: float = 1.99) -> CompletionProblem:
    """Random instance: ``A = U V^T`` with standard normal ``n x rank``
    factors, and ``round(fraction * n^2)`` positions sampled uniformly
    without replacement.

    Draw order is ``U`` then ``V`` (both row-major) then the mask.  The
    nuclear radius defaults to ``rank``.
    """
    if rank < 1 or rank > n:
        raise ValueError(f"rank must lie in [1, n={n}], got {rank}")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    U = gaussian_array(rng, n * rank).reshape(n, rank)
    V = gaussian_array(rng, n * rank).reshape(n, rank)
    m = int(round(fraction * n * n))
    mask = ObservationMask(n, sample_without_replacement(rng, n * n, m))
    return CompletionProblem(U @ V.T, mask, float(rank if r is None else r), step)


def _check(X, prob: CompletionProblem) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (prob.n, prob.n):
        raise DimensionError(f"expected {prob.n}x{prob.n}, got {X.shape}")
    return X


def grad_f(X, prob: CompletionProblem) -> np.ndarray:
    """``P_Omega(X - A)``."""
    X = _check(X, prob)
    return np.where(prob.mask.dense, X - prob.truth, 0.0)


def t3_apply(X, prob: CompletionProblem, svd_method: str = "lapack") -> np.ndarray:
    X = _check(X, prob)
    return project_nuclear_ball(X - prob.step * grad_f(X, prob), prob.r, svd_method)


def completion_ofv(X, prob: CompletionProblem) -> float:
    g = grad_f(X, prob)
    return 0.5 * float(np.sum(g * g))


def relative_error(X_curr, X_prev) -> float:
    """``||X_curr - X_prev||_F / ||X_curr||_F``; ``inf`` when ``X_curr = 0``."""
    X_curr = np.asarray(X_curr, dtype=np.float64)
    den = float(np.linalg.norm(X_curr))
    if den == 0.0:
        return math.inf
    return float(np.linalg.norm(X_curr - np.asarray(X_prev, dtype=np.float64))) / den


def initial_point(prob: CompletionProblem) -> np.ndarray:
    """Observed entries of ``A``, zeros elsewhere."""
    return np.where(prob.mask.dense, prob.truth, 0.0)


def objective_hook(prob: CompletionProblem):
    n = prob.n
    return lambda x: completion_ofv(x.reshape(n, n), prob)


class RelativeErrorHook:
    """Quality hook reporting RE between consecutive iterates.

    Each call compares against the point seen on the previous call (the
    starting point on the first call), so one instance serves one run.
    """

    def __init__(self, x0):
        self.prev = np.array(x0, dtype=np.float64).reshape(-1)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        re = relative_error(x, self.prev)
        self.prev = x.copy()
        return re

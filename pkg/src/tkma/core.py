"""Fixed-point steppers and the budgeted run driver.

All iterations act on flat float64 vectors.  An :class:`Operator` wraps a
map ``T`` together with its declared averagedness constant; the driver
:func:`run` counts every evaluation of ``T`` so that algorithms with
different evaluations-per-step can be compared on the same budget.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

#: ``||Tx - x||^2`` below this is treated as an exact fixed point.
ZERO_RESIDUAL_SQ = 1e-24
#: Slack before an out-of-range momentum value triggers a warning.
THETA_WARN_SLACK = 1e-6


class ZeroResidual(ArithmeticError):
    """``Tx == x`` to working precision: a fixed point has been found."""


class DimensionError(ValueError):
    pass


class NonFiniteIterate(FloatingPointError):
    pass


class ThetaRangeWarning(RuntimeWarning):
    """Adaptive momentum left ``[1 - 2*alpha, 1]``; usually a mis-declared alpha."""


class Algorithm(str, enum.Enum):
    PICARD = "Picard"
    KM = "KM"
    TKMA = "TKMA"
    FAST_KM = "FastKM"
    HALPERN_HARMONIC = "HalpernHarmonic"
    HALPERN_ADAPTIVE = "HalpernAdaptive"

    @property
    def evals_per_step(self) -> int:
        return 2 if self is Algorithm.TKMA else 1


class HalpernMode(str, enum.Enum):
    HARMONIC = "Harmonic"
    ADAPTIVE = "Adaptive"


class Operator:
    """A map ``T: R^dim -> R^dim`` with declared averagedness ``alpha``.

    Calling the operator checks the input dimension and the output shape.
    ``fn`` must not mutate its argument.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int,
                 alpha: float = 0.5, name: str = "T"):
        if dim < 1:
            raise ValueError("dim must be positive")
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        self.fn = fn
        self.dim = int(dim)
        self.alpha = float(alpha)
        self.name = name

    def __call__(self, x: np.ndarray) -> np.ndarray:
        _check_dim(self, x)
        y = np.asarray(self.fn(x), dtype=np.float64)
        if y.shape != (self.dim,):
            raise DimensionError(f"{self.name} returned shape {y.shape}, expected ({self.dim},)")
        return y

    def with_alpha(self, alpha: float) -> Operator:
        return Operator(self.fn, self.dim, alpha, self.name)

    def __repr__(self):
        return f"Operator({self.name!r}, dim={self.dim}, alpha={self.alpha})"


class _Counted:
    # per-run wrapper; keeps Operator itself stateless and thread-safe
    def __init__(self, op: Operator):
        self.op = op
        self.alpha = op.alpha
        self.dim = op.dim
        self.count = 0

    def __call__(self, x):
        self.count += 1
        return self.op(x)


def _check_dim(T, x) -> None:
    if np.ndim(x) != 1 or np.shape(x)[0] != T.dim:
        raise DimensionError(f"expected a vector of length {T.dim}, got shape {np.shape(x)}")


def _as_point(x) -> np.ndarray:
    return np.array(x, dtype=np.float64).reshape(-1)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def picard_step(T: Operator, x) -> np.ndarray:
    """One Picard step ``x -> T(x)``."""
    return T(_as_point(x))


def km_step(T: Operator, x, lam: float) -> np.ndarray:
    """Relaxed step ``(1 - lam) x + lam T(x)`` with ``lam`` in (0, 1]."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"KM relaxation must lie in (0, 1], got {lam}")
    x = _as_point(x)
    return (1.0 - lam) * x + lam * T(x)


def adaptive_theta(x, Tx, TTx) -> float:
    """Momentum ``-<Tx - x, Tx - TTx> / ||Tx - x||^2``.

    Among points on the line through ``x`` and ``Tx`` this picks the one
    closest to ``TTx``.  Raises :class:`ZeroResidual` when ``Tx == x``.
    """
    d = np.asarray(Tx, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    nsq = float(np.dot(d, d))
    if nsq < ZERO_RESIDUAL_SQ:
        raise ZeroResidual(nsq)
    return -float(np.dot(d, np.asarray(Tx) - np.asarray(TTx))) / nsq


def optimal_theta(x, Tx, xhat) -> float:
    """Best momentum ``-<Tx - x, Tx - xhat> / ||Tx - x||^2`` toward a known
    fixed point ``xhat``."""
    return adaptive_theta(x, Tx, xhat)


def momentum_point(x, Tx, theta: float) -> np.ndarray:
    """``T^theta x = Tx + theta (Tx - x)``."""
    return (1.0 + theta) * np.asarray(Tx) - theta * np.asarray(x)


@dataclass
class TKMAParts:
    x_next: np.ndarray
    theta: float
    Tx: np.ndarray
    TTx: np.ndarray
    v: np.ndarray


def _tkma_parts(T, x: np.ndarray, t: float) -> TKMAParts:
    y = T(x)
    z = T(y)
    theta = adaptive_theta(x, y, z)
    v = (1.0 + theta) * y - theta * x
    return TKMAParts((1.0 - t) * z + t * v, theta, y, z, v)


def tkma_step(T: Operator, x, t: float = 0.5) -> tuple[np.ndarray, float]:
    """Two-step KM update ``(1 - t) T^2 x + t T^theta x``.

    Uses exactly two evaluations of ``T``.  Returns the new point and the
    adaptive momentum used.  Raises :class:`ZeroResidual` at a fixed point.
    """
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in (0, 1), got {t}")
    parts = _tkma_parts(T, _as_point(x), t)
    return parts.x_next, parts.theta


@dataclass
class StepState:
    """Iteration history for the stateful steppers.

    ``x_curr`` is ``x^k``.  Fast KM keeps ``x_prev``/``Tx_prev`` from step
    ``k - 1``; Halpern keeps the fixed ``anchor``.  The steppers advance the
    state in place.
    """

    x_curr: np.ndarray
    k: int = 0
    x_prev: Optional[np.ndarray] = None
    Tx_prev: Optional[np.ndarray] = None
    anchor: Optional[np.ndarray] = None
    t_applies: int = 0
    last_Tx: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def fast_km(cls, x0) -> StepState:
        return cls(_as_point(x0))

    @classmethod
    def halpern(cls, x0) -> StepState:
        x0 = _as_point(x0)
        return cls(x0, anchor=x0.copy())


def fast_km_step(T: Operator, state: StepState, s: float = 1.0, alpha_fkm: float = 50.0) -> np.ndarray:
    """Fast KM (Nesterov-type momentum on KM); one new evaluation per step.

    At ``k = 0`` the missing history is taken as ``x^{-1} = x^0`` and
    ``T x^{-1} = T x^0``, which switches the momentum terms off.
    """
    if alpha_fkm <= 2.0:
        raise ValueError(f"Fast KM requires alpha > 2, got {alpha_fkm}")
    if s <= 0.0:
        raise ValueError("Fast KM requires s > 0")
    k = state.k
    x = state.x_curr
    if k >= 1 and (state.x_prev is None or state.Tx_prev is None):
        raise ValueError("Fast KM step at k >= 1 needs x^{k-1} and T x^{k-1}")
    Tx = T(x)
    state.t_applies += 1
    x_prev = x if k == 0 else state.x_prev
    Tx_prev = Tx if k == 0 else state.Tx_prev
    denom = k + alpha_fkm
    c = s * alpha_fkm / (2.0 * denom)
    x_next = ((1.0 - c) * x + ((1.0 - s) * k / denom) * (x - x_prev)
              + c * Tx + (s * k / denom) * (Tx - Tx_prev))
    state.x_prev, state.Tx_prev, state.last_Tx = x, Tx, Tx
    state.x_curr = x_next
    state.k = k + 1
    return x_next


def halpern_weight(mode: HalpernMode, k_next: int, x_prev, Tx_prev, anchor) -> float:
    """Anchoring weight ``lambda_k`` applied to ``T x^{k-1}`` when forming ``x^k``."""
    mode = HalpernMode(mode)
    if mode is HalpernMode.HARMONIC:
        return 1.0 / (k_next + 1.0)
    r = np.asarray(x_prev) - np.asarray(Tx_prev)
    nsq = float(np.dot(r, r))
    if nsq < ZERO_RESIDUAL_SQ:
        raise ZeroResidual(nsq)
    phi = 2.0 * float(np.dot(r, np.asarray(anchor) - np.asarray(x_prev))) / nsq + 1.0
    # applied verbatim: negative or >1 weights are allowed
    return 1.0 / (phi + 1.0)


def halpern_step(T: Operator, state: StepState, mode=HalpernMode.HARMONIC) -> np.ndarray:
    """Anchored step ``x^k = (1 - lambda_k) x^0 + lambda_k T x^{k-1}``.

    ``state.x_curr`` holds ``x^{k-1}``; the state is advanced to ``x^k``.
    """
    if state.anchor is None:
        raise ValueError("Halpern step needs the anchor x^0")
    x = state.x_curr
    Tx = T(x)
    state.t_applies += 1
    state.last_Tx = Tx
    lam = halpern_weight(mode, state.k + 1, x, Tx, state.anchor)
    x_next = (1.0 - lam) * state.anchor + lam * Tx
    state.x_curr = x_next
    state.k += 1
    return x_next


# ---------------------------------------------------------------------------
# run driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Algorithm choice and its parameters.

    ``alpha_fkm`` is the Fast KM momentum parameter (not an averagedness
    constant).  ``label`` names the run in traces; it defaults to the
    algorithm name.
    """

    algorithm: Algorithm = Algorithm.TKMA
    t: float = 0.5
    lambda_relax: float = 0.5
    s: float = 1.0
    alpha_fkm: float = 50.0
    max_t_applies: int = 100
    residual_tol: float = 0.0
    seed: int = 0
    label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"t must lie in (0, 1), got {self.t}")
        if not 0.0 < self.lambda_relax <= 1.0:
            raise ValueError(f"lambda_relax must lie in (0, 1], got {self.lambda_relax}")
        if self.s <= 0.0:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.alpha_fkm <= 2.0:
            raise ValueError(f"alpha_fkm must exceed 2, got {self.alpha_fkm}")
        if self.max_t_applies < 0:
            raise ValueError("max_t_applies must be nonnegative")
        if self.residual_tol < 0.0:
            raise ValueError("residual_tol must be nonnegative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def name(self) -> str:
        return self.label or self.algorithm.value

    def validate_for(self, T: Operator) -> None:
        if self.algorithm is Algorithm.FAST_KM and self.s > 1.0 / T.alpha + 1e-15:
            raise ValueError(f"Fast KM needs s <= 1/alpha = {1.0 / T.alpha:g}, got s = {self.s}")

    def replace(self, **kw) -> SolverConfig:
        return replace(self, **kw)


@dataclass(frozen=True)
class IterRecord:
    """One row of a run trace.

    Record ``k`` is emitted after step ``k``: ``residual`` is the gap
    ``||T x^k - x^k||`` measured by that step's first evaluation,
    ``t_applies`` the evaluations consumed so far, and ``objective`` /
    ``quality`` are evaluated on the iterate ``x^{k+1}`` the step produced.
    """

    k: int
    t_applies: int
    residual: float
    theta: Optional[float] = None
    theta_var_cum: Optional[float] = None
    objective: Optional[float] = None
    quality: Optional[float] = None


@dataclass
class RunTrace:
    algorithm: str
    records: list = field(default_factory=list)
    x: Optional[np.ndarray] = None
    status: str = "budget"
    theta_out_of_range: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.records], dtype=np.float64)

    @property
    def t_applies(self) -> np.ndarray:
        return np.array([r.t_applies for r in self.records], dtype=np.int64)


def theta_in_range(theta: float, alpha: float, slack: float = THETA_WARN_SLACK) -> bool:
    """Whether ``theta`` respects ``[1 - 2 alpha, 1]`` (only meaningful for alpha <= 1/2)."""
    return alpha > 0.5 or (1.0 - 2.0 * alpha - slack <= theta <= 1.0 + slack)


def run(T: Operator, x0, cfg: SolverConfig,
        objective_hook: Optional[Callable[[np.ndarray], float]] = None,
        quality_hook: Optional[Callable[[np.ndarray], float]] = None) -> RunTrace:
    """Iterate ``cfg.algorithm`` from ``x0`` within ``cfg.max_t_applies``
    evaluations of ``T``.

    A step is started only if its evaluations fit in the remaining budget.
    The run stops early when the measured residual drops to
    ``cfg.residual_tol`` or below, or when ``Tx == x`` exactly
    (status ``"zero_residual"``).  A non-finite iterate aborts the run with
    a final record whose residual is ``inf`` (status ``"nonfinite"``).

    Hooks receive the iterate in the operator's space; problem modules
    wrap them to evaluate on the recovered primal quantity.
    """
    cfg.validate_for(T)
    algo = cfg.algorithm
    x = _as_point(x0)
    _check_dim(T, x)
    if not np.all(np.isfinite(x)):
        raise NonFiniteIterate("x0 has non-finite entries")
    Tc = _Counted(T)
    trace = RunTrace(cfg.name, x=x)
    state = StepState.halpern(x) if algo in (Algorithm.HALPERN_HARMONIC, Algorithm.HALPERN_ADAPTIVE) \
        else StepState.fast_km(x)
    try:
        _drive(Tc, x, cfg, trace, state, objective_hook, quality_hook)
    finally:
        if trace.theta_out_of_range:
            warnings.warn(f"{trace.theta_out_of_range} momentum values fell outside "
                          f"[{1 - 2 * T.alpha:g}, 1] for declared alpha={T.alpha:g}",
                          ThetaRangeWarning, stacklevel=2)
    return trace


def _drive(Tc, x, cfg, trace, state, objective_hook, quality_hook):
    algo = cfg.algorithm
    per_step = algo.evals_per_step
    theta_prev = None
    theta_var = 0.0
    k = 0
    while Tc.count + per_step <= cfg.max_t_applies:
        theta = None
        zero = False
        try:
            if algo is Algorithm.TKMA:
                parts = _tkma_parts(Tc, x, cfg.t)
                d = parts.Tx - x
                res_sq = float(np.dot(d, d))
                theta, x_next = parts.theta, parts.x_next
                if not theta_in_range(theta, Tc.alpha):
                    trace.theta_out_of_range += 1
            elif algo in (Algorithm.PICARD, Algorithm.KM):
                Tx = Tc(x)
                d = Tx - x
                res_sq = float(np.dot(d, d))
                if res_sq < ZERO_RESIDUAL_SQ:
                    raise ZeroResidual(res_sq)
                x_next = Tx if algo is Algorithm.PICARD else (1.0 - cfg.lambda_relax) * x + cfg.lambda_relax * Tx
            elif algo is Algorithm.FAST_KM:
                x_next = fast_km_step(Tc, state, cfg.s, cfg.alpha_fkm)
                d = state.last_Tx - x
                res_sq = float(np.dot(d, d))
                if res_sq < ZERO_RESIDUAL_SQ:
                    raise ZeroResidual(res_sq)
            else:
                mode = HalpernMode.HARMONIC if algo is Algorithm.HALPERN_HARMONIC else HalpernMode.ADAPTIVE
                x_next = halpern_step(Tc, state, mode)
                d = state.last_Tx - x
                res_sq = float(np.dot(d, d))
                if res_sq < ZERO_RESIDUAL_SQ:
                    raise ZeroResidual(res_sq)
        except ZeroResidual as exc:
            zero = True
            res_sq = float(exc.args[0]) if exc.args else 0.0
            x_next = x

        if not np.all(np.isfinite(x_next)):
            trace.records.append(IterRecord(k, Tc.count, math.inf))
            trace.status = "nonfinite"
            return

        if theta is not None:
            if theta_prev is not None:
                theta_var += abs(theta - theta_prev)
            theta_prev = theta
        trace.records.append(IterRecord(
            k=k,
            t_applies=Tc.count,
            residual=math.sqrt(res_sq),
            theta=theta,
            theta_var_cum=theta_var if algo is Algorithm.TKMA else None,
            objective=None if objective_hook is None else float(objective_hook(x_next)),
            quality=None if quality_hook is None else float(quality_hook(x_next)),
        ))
        x = x_next
        trace.x = x
        k += 1
        if zero:
            trace.status = "zero_residual"
            return
        if math.sqrt(res_sq) <= cfg.residual_tol:
            trace.status = "tolerance"
            return


def value_at(trace: RunTrace, t: int, column: str) -> float:
    """Last-value-carried-forward lookup of ``column`` at budget ``t``.

    Returns NaN if the trace has no record with ``t_applies <= t``.
    """
    best = math.nan
    for rec in trace.records:
        if rec.t_applies > t:
            break
        val = getattr(rec, column)
        best = math.nan if val is None else float(val)
    return best


def shared_checkpoints(*traces: RunTrace) -> list:
    """Budgets at which every trace emitted a record, ascending."""
    if not traces:
        return []
    common = set(int(r.t_applies) for r in traces[0].records)
    for tr in traces[1:]:
        common &= set(int(r.t_applies) for r in tr.records)
    return sorted(common)

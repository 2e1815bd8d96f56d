"""Runnable versions of the convergence theory for averaged operators.

Synthetic ``alpha``-averaged operators ``T = (1 - alpha) I + alpha N`` are
built from nonexpansive ``N`` with a known fixed point, and the
inequalities the theory promises for KM momentum and TKMA are checked
numerically along short runs.  :func:`theory_suite` aggregates the checks
into a :class:`VerifyReport`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Operator, ZeroResidual, _tkma_parts, optimal_theta
from .rng import RngState, gaussian_array, next_bounded, next_uniform, rng_new

GRID_POINTS = 100
THETA_RESIDUAL_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# synthetic averaged operators
# ---------------------------------------------------------------------------

def averaged(N, alpha: float, dim: int, declared_alpha: Optional[float] = None,
             name: str = "T") -> Operator:
    """``(1 - alpha) I + alpha N``, declared as ``declared_alpha`` (default ``alpha``)."""
    a = float(alpha)
    return Operator(lambda x: (1.0 - a) * x + a * N(x), dim,
                    a if declared_alpha is None else declared_alpha, name)


def random_orthogonal(rng: RngState, d: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed)."""
    Q, R = np.linalg.qr(gaussian_array(rng, d * d).reshape(d, d))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


@dataclass
class SyntheticProblem:
    T: Operator
    xhat: np.ndarray
    kind: str


def affine_problem(rng: RngState, d: int, alpha: float, declared_alpha=None) -> SyntheticProblem:
    """``N(x) = c + K (x - c)`` with ``K = Q diag(s)``, ``s`` uniform in [-1, 1]."""
    Q = random_orthogonal(rng, d)
    s = np.array([2.0 * next_uniform(rng) - 1.0 for _ in range(d)])
    K = Q * s
    c = gaussian_array(rng, d)
    return SyntheticProblem(averaged(lambda x: c + K @ (x - c), alpha, d, declared_alpha, "affine"),
                            c, "affine")


def reflected_box_problem(rng: RngState, d: int, alpha: float, declared_alpha=None) -> SyntheticProblem:
    """``N = R_C(c + Q (x - c))`` with ``R_C = 2 P_C - I`` for a box ``C`` containing ``c``."""
    Q = random_orthogonal(rng, d)
    c = gaussian_array(rng, d)
    lo = c - np.array([0.1 + next_uniform(rng) for _ in range(d)])
    hi = c + np.array([0.1 + next_uniform(rng) for _ in range(d)])

    def N(x):
        w = c + Q @ (x - c)
        return 2.0 * np.clip(w, lo, hi) - w

    return SyntheticProblem(averaged(N, alpha, d, declared_alpha, "reflected-box"), c, "reflected-box")


def reflected_ball_problem(rng: RngState, d: int, alpha: float, declared_alpha=None) -> SyntheticProblem:
    """``N = R_C`` for a Euclidean ball ``C``; ``xhat`` is its center."""
    c = gaussian_array(rng, d)
    radius = 0.1 + next_uniform(rng)

    def N(x):
        w = x - c
        nw = float(np.linalg.norm(w))
        p = x if nw <= radius else c + w * (radius / nw)
        return 2.0 * p - x

    return SyntheticProblem(averaged(N, alpha, d, declared_alpha, "reflected-ball"), c, "reflected-ball")


FAMILIES = (affine_problem, reflected_box_problem, reflected_ball_problem)


def spread_rotation(rng: RngState, d: int) -> np.ndarray:
    """Orthogonal matrix with rotation angles ``j pi / m``, ``j = 1..m``,
    ``m = d // 2``, in a Haar-random basis (odd ``d`` adds an eigenvalue -1).

    Evenly spaced angles pin the spectral gap, unlike a Haar draw whose
    smallest angle varies wildly between seeds.
    """
    m = d // 2
    R = np.zeros((d, d))
    for j in range(m):
        phi = math.pi * (j + 1) / m
        c, s = math.cos(phi), math.sin(phi)
        R[2 * j:2 * j + 2, 2 * j:2 * j + 2] = [[c, -s], [s, c]]
    if d % 2:
        R[-1, -1] = -1.0
    B = random_orthogonal(rng, d)
    return B @ R @ B.T


def affine_rate_problem(d: int = 50, alpha: float = 0.5, seed: int = 0, stream: int = 7) -> SyntheticProblem:
    """``T x = xhat + ((1 - alpha) I + alpha Q)(x - xhat)`` with ``Q`` from
    :func:`spread_rotation`."""
    rng = rng_new(seed, stream)
    Q = spread_rotation(rng, d)
    xhat = gaussian_array(rng, d)
    M = (1.0 - alpha) * np.eye(d) + alpha * Q
    return SyntheticProblem(Operator(lambda x: xhat + M @ (x - xhat), d, alpha, "affine-rate"),
                            xhat, "affine-rate")


# ---------------------------------------------------------------------------
# KM momentum acceleration along one step
# ---------------------------------------------------------------------------

@dataclass
class AccelerationReport:
    theta_star: float
    alpha: float
    thetas: np.ndarray
    psi: np.ndarray
    monotone: bool
    within_bound: bool
    theta_star_bound: Optional[bool] = None
    inside_ball: Optional[bool] = None
    sign_consistent: Optional[bool] = None
    monotone_margin: float = math.inf
    bound_margin: float = math.inf

    @property
    def ok(self) -> bool:
        flags = [self.monotone, self.within_bound, self.theta_star_bound, self.sign_consistent]
        return all(f for f in flags if f is not None)


def verify_km_acceleration(T: Operator, xhat, x, grid: int = GRID_POINTS,
                           fixed_tol: float = 1e-10, sign_tol: float = 1e-10) -> AccelerationReport:
    """Sample ``psi(theta) = ||T^theta x - xhat||`` along the momentum line.

    For ``alpha < 1/2`` the grid covers ``[0, theta*]`` and ``psi`` must
    decrease strictly there; ``psi <= ||Tx - xhat||`` is checked on
    ``[0, 2 theta*]``, and ``theta* >= 1/(2 alpha) - 1``.  For
    ``alpha >= 1/2`` the sign of ``theta*`` must agree with whether ``Tx``
    lies in the ball centred at ``(x + xhat)/2`` through ``x`` (boundary
    counts as inside) and the bound is checked on the signed interval
    between 0 and ``2 theta*``.
    """
    if grid < 2:
        raise ValueError("grid needs at least the two endpoints")
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    gap = float(np.linalg.norm(T(xhat) - xhat))
    if gap > fixed_tol:
        raise ValueError(f"xhat is not a fixed point: ||T xhat - xhat|| = {gap:.3g}")
    Tx = T(x)
    d = Tx - x
    ts = optimal_theta(x, Tx, xhat)
    alpha = T.alpha

    def psi_sq(thetas):
        P = Tx[None, :] + thetas[:, None] * d[None, :] - xhat[None, :]
        return np.einsum("ij,ij->i", P, P)

    seg = np.linspace(0.0, ts, grid)
    psi_seg = psi_sq(seg)
    drops = psi_seg[:-1] - psi_seg[1:]
    monotone = bool(np.all(drops > 0.0))
    span = np.linspace(min(0.0, 2.0 * ts), max(0.0, 2.0 * ts), grid)
    base = float(np.dot(Tx - xhat, Tx - xhat))
    psi_span = psi_sq(span)
    bound_margin = float(np.min(base - psi_span)) if base > 0 else float(-np.max(psi_span))
    # rounding slack scaled to the quantities involved
    within = bound_margin >= -1e-12 * (1.0 + base)
    rep = AccelerationReport(ts, alpha, seg, np.sqrt(psi_seg), monotone, within,
                             monotone_margin=float(drops.min()) if drops.size else math.inf,
                             bound_margin=bound_margin)
    if alpha < 0.5:
        rep.theta_star_bound = ts >= 1.0 / (2.0 * alpha) - 1.0 - 1e-12
    else:
        center = 0.5 * (x + xhat)
        inside = float(np.dot(Tx - center, Tx - center)) <= float(np.dot(x - center, x - center))
        rep.inside_ball = inside
        rep.sign_consistent = ts >= -sign_tol if inside else ts < sign_tol
    return rep


# ---------------------------------------------------------------------------
# invariant bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class Check:
    """Tally of one inequality; ``margin >= 0`` means it held."""

    name: str
    trials: int = 0
    violations: int = 0
    worst_margin: float = math.inf

    def record(self, margin: float) -> None:
        self.trials += 1
        if not margin >= 0:  # catches NaN too
            self.violations += 1
        if math.isnan(margin) or margin < self.worst_margin:
            self.worst_margin = margin

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class VerifyReport:
    checks: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    skipped: int = 0

    def check(self, name: str) -> Check:
        if name not in self.checks:
            self.checks[name] = Check(name)
        return self.checks[name]

    @property
    def violations(self) -> int:
        return sum(c.violations for c in self.checks.values())

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def merge(self, other: VerifyReport) -> VerifyReport:
        for c in other.checks.values():
            mine = self.check(c.name)
            mine.trials += c.trials
            mine.violations += c.violations
            mine.worst_margin = min(mine.worst_margin, c.worst_margin)
        self.warnings.extend(other.warnings)
        self.skipped += other.skipped
        return self

    def format(self) -> str:
        lines = [f"{'check':<34} {'trials':>8} {'viol':>6} {'worst margin':>14}  status"]
        for c in self.checks.values():
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{c.name:<34} {c.trials:>8} {c.violations:>6} {c.worst_margin:>14.4g}  {status}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        lines.append(f"total violations: {self.violations}")
        return "\n".join(lines)


def tkma_invariants(prob: SyntheticProblem, x0, t: float, steps: int, report: VerifyReport,
                    alpha: Optional[float] = None) -> None:
    """Run ``steps`` TKMA iterations and record the per-step inequalities.

    ``alpha`` defaults to the operator's declared constant; every bound is
    computed from it.
    """
    T, xhat = prob.T, prob.xhat
    a = T.alpha if alpha is None else alpha
    eta = (1.0 - t) ** 2 * (1.0 - a) / a
    x = np.asarray(x0, dtype=np.float64)
    dist0 = float(np.dot(x - xhat, x - xhat))
    partial = 0.0
    prev = None  # (x_k, theta_k, T^theta_k x_k)
    for _ in range(steps):
        try:
            p = _tkma_parts(T, x, t)
        except ZeroResidual:
            break
        d = p.Tx - x
        rn = float(np.linalg.norm(d))
        theta = p.theta
        # theta carries rounding of order eps * ||x|| / ||Tx - x||; below this
        # floor the range test measures float noise, not the operator
        if a <= 0.5 and rn > THETA_RESIDUAL_FLOOR * (1.0 + float(np.linalg.norm(x))):
            report.check("theta range [1-2a, 1]").record(
                min(theta - (1.0 - 2.0 * a) + 1e-8, 1.0 + 1e-8 - theta))
        w = p.TTx - p.v
        report.check("orthogonality").record(
            1e-9 * rn * (float(np.linalg.norm(w)) + 1.0) - abs(float(np.dot(d, w))))
        lhs = float(np.dot(p.x_next - xhat, p.x_next - xhat))
        dk = float(np.dot(x - xhat, x - xhat))
        report.check("Fejer decrease").record(dk - eta * rn * rn + 1e-10 - lhs)
        partial += rn * rn
        report.check("residual series bound").record(
            dist0 / eta + 1e-10 * (1.0 + dist0 / eta) - partial)
        if prev is not None:
            x_prev, th_prev, v_prev = prev
            if 1.0 + th_prev > 1e-12:
                tau = (1.0 + theta) / (1.0 + th_prev)
                bound = (tau + abs(1.0 - tau)) * float(np.linalg.norm(x - x_prev))
                report.check("momentum step bound").record(
                    bound + 1e-9 - float(np.linalg.norm(p.v - v_prev)))
        prev = (x, theta, p.v)
        x = p.x_next


def acceleration_invariants(prob: SyntheticProblem, x, report: VerifyReport, grid: int = GRID_POINTS) -> None:
    rep = verify_km_acceleration(prob.T, prob.xhat, x, grid)
    if rep.alpha < 0.5:
        report.check("theta* lower bound").record(
            rep.theta_star - (1.0 / (2.0 * rep.alpha) - 1.0) + 1e-12)
        report.check("psi strictly decreasing").record(rep.monotone_margin if rep.monotone else -1.0)
        report.check("momentum beats Picard").record(rep.bound_margin + 1e-12)
    else:
        report.check("theta* sign vs ball").record(1.0 if rep.sign_consistent else -1.0)
        report.check("momentum no worse (signed)").record(rep.bound_margin + 1e-12)


def theory_suite(trials: int = 10_000, seed: int = 0, alphas=(0.1, 0.25, 0.4, 0.5),
                 build_alpha: Optional[float] = None, t: float = 0.5, steps: int = 6,
                 stream: int = 11) -> VerifyReport:
    """Random-operator checks of the momentum and TKMA convergence theory.

    Trial ``i`` uses ``alphas[i % len(alphas)]`` as the declared constant
    and cycles through the operator families.  ``build_alpha`` builds the
    operators with a different true constant, which should make the
    checks fail.
    """
    report = VerifyReport()
    if trials <= 0:
        report.warnings.append("no trials requested; checks pass vacuously")
        return report
    rng = rng_new(seed, stream)
    for i in range(trials):
        a = float(alphas[i % len(alphas)])
        true_a = a if build_alpha is None else float(build_alpha)
        family = FAMILIES[(i // len(alphas)) % len(FAMILIES)]
        d = 2 + next_bounded(rng, 7)
        prob = family(rng, d, true_a, declared_alpha=a)
        x = prob.xhat + (1.0 + 4.0 * next_uniform(rng)) * _unit(gaussian_array(rng, d))
        if float(np.dot(prob.T(x) - x, prob.T(x) - x)) < 1e-20:
            report.skipped += 1
            continue
        acceleration_invariants(prob, x, report)
        tkma_invariants(prob, x, t, steps, report)
    return report


def _unit(v):
    n = float(np.linalg.norm(v))
    return v / n if n > 0 else v


# ---------------------------------------------------------------------------
# rate diagnostics
# ---------------------------------------------------------------------------

def final_quartile_share(cum) -> float:
    """Fraction of a cumulative sum's final value gained over the last
    quarter of its entries (0 for an all-zero sum)."""
    cum = np.asarray(cum, dtype=np.float64)
    if cum.size == 0 or cum[-1] == 0:
        return 0.0
    q = int(math.floor(0.75 * (cum.size - 1)))
    return float((cum[-1] - cum[q]) / cum[-1])


@dataclass
class RateDiagnostic:
    scaled_steps: np.ndarray  # k * ||x^{k+1} - x^k||^2
    thetas: np.ndarray

    def scaled_at(self, k: int) -> float:
        return float(self.scaled_steps[k])

    @property
    def theta_variation(self) -> np.ndarray:
        """Cumulative ``sum |theta_{i+1} - theta_i|``."""
        return np.concatenate([[0.0], np.cumsum(np.abs(np.diff(self.thetas)))])

    def final_quartile_share(self) -> float:
        return final_quartile_share(self.theta_variation)

    def midpoint_bound_holds(self, slack: float = 0.0) -> bool:
        """``k ||dx_k||^2`` over the final half never exceeds its midpoint value."""
        s = self.scaled_steps
        m = len(s) // 2
        return bool(np.all(s[m:] <= s[m] * (1.0 + slack)))


def tkma_rate_run(T: Operator, x0, steps: int, t: float = 0.5) -> RateDiagnostic:
    x = np.asarray(x0, dtype=np.float64)
    sq = np.zeros(steps)
    thetas = np.zeros(steps)
    for k in range(steps):
        p = _tkma_parts(T, x, t)
        dx = p.x_next - x
        sq[k] = k * float(np.dot(dx, dx))
        thetas[k] = p.theta
        x = p.x_next
    return RateDiagnostic(sq, thetas)

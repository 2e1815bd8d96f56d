"""Proximity operators and projections.

Soft-thresholding (the prox of ``tau * ||.||_1``), its residual map,
Euclidean projection onto the l1 ball, and projection onto the nuclear
norm ball through an SVD of the singular spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SVDError(np.linalg.LinAlgError):
    pass


def soft_threshold(v, tau: float) -> np.ndarray:
    """Componentwise ``sign(v) * max(|v| - tau, 0)``."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    return v - np.clip(v, -tau, tau)


def residual_prox(v, tau: float) -> np.ndarray:
    """``v - soft_threshold(v, tau)``, i.e. ``v`` clamped to ``[-tau, tau]``.

    This is the map ``I - prox_{tau ||.||_1}``, firmly nonexpansive.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    return np.clip(np.asarray(v, dtype=np.float64), -tau, tau)


def l1_threshold(a: np.ndarray, r: float) -> float:
    """Threshold ``tau`` with ``sum(max(a - tau, 0)) = r`` for ``a >= 0``,
    ``sum(a) > r``, via descending sort and cumulative sums."""
    s = np.sort(a)[::-1]
    css = np.cumsum(s)
    counts = np.arange(1, s.size + 1)
    cand = (css - r) / counts
    rho = np.nonzero(s > cand)[0][-1]
    return float(cand[rho])


def project_l1_ball(v, r: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{w : ||w||_1 <= r}``."""
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    v = np.asarray(v, dtype=np.float64)
    a = np.abs(v)
    if a.sum() <= r:
        return v.copy()
    return soft_threshold(v, l1_threshold(a, r))


@dataclass(frozen=True)
class SvdFactors:
    """``X = u @ diag(sigma) @ v.T`` with orthonormal ``u``, ``v`` and
    nonincreasing ``sigma``."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def _round_robin(n: int):
    # tournament schedule: every pair (i, j) exactly once in n - 1 rounds
    # of n/2 disjoint pairs (a dummy player pads odd n)
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = []
        q = []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_svd(X, tol: float = 1e-12, max_sweeps: int = 60) -> SvdFactors:
    """One-sided Jacobi SVD of a square matrix.

    Column pairs are orthogonalised by plane rotations, ``n/2`` disjoint
    pairs at a time.  A sweep visits every pair once; iteration stops when
    every pair satisfies ``|w_p . w_q| <= tol * ||w_p|| ||w_q||``.
    Columns whose norm falls below ``n * eps * sigma_max`` are treated as
    exact zeros and the matching left vectors are completed to an
    orthonormal basis.
    """
    W = np.array(X, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"square matrix required, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise SVDError("matrix has non-finite entries")
    n = W.shape[0]
    V = np.eye(n)
    rounds = _round_robin(n) if n > 1 else []
    converged = n <= 1
    for _ in range(max_sweeps):
        if converged:
            break
        rotated = False
        for p, q in rounds:
            wp = W[:, p]
            wq = W[:, q]
            a = np.einsum("ij,ij->j", wp, wp)
            b = np.einsum("ij,ij->j", wq, wq)
            g = np.einsum("ij,ij->j", wp, wq)
            active = np.abs(g) > tol * np.sqrt(a * b)
            if not np.any(active):
                continue
            rotated = True
            p, q, a, b, g = p[active], q[active], a[active], b[active], g[active]
            zeta = (b - a) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t[zeta == 0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            wp = W[:, p]
            wq = W[:, q]
            W[:, p] = c * wp - s * wq
            W[:, q] = s * wp + c * wq
            vp = V[:, p]
            vq = V[:, q]
            V[:, p] = c * vp - s * vq
            V[:, q] = s * vp + c * vq
        converged = not rotated
    if not converged:
        raise SVDError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sigma = np.sqrt(np.einsum("ij,ij->j", W, W))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    W = W[:, order]
    V = V[:, order]
    cutoff = n * np.finfo(float).eps * (sigma[0] if n else 0.0)
    keep = sigma > cutoff
    U = np.zeros((n, n))
    U[:, keep] = W[:, keep] / sigma[keep]
    sigma = np.where(keep, sigma, 0.0)
    nk = int(keep.sum())
    if nk < n:
        # orthonormal completion of the numerically null part
        Q, _ = np.linalg.qr(np.hstack([U[:, :nk], np.eye(n)]))
        U[:, nk:] = Q[:, nk:n]
    return SvdFactors(U, sigma, V)


def svd(X, method: str = "lapack") -> SvdFactors:
    """SVD of a square matrix.

    ``method="lapack"`` uses :func:`numpy.linalg.svd`; ``method="jacobi"``
    uses :func:`jacobi_svd`.  Both return nonincreasing singular values.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"square matrix required, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise SVDError("matrix has non-finite entries")
    if method == "jacobi":
        return jacobi_svd(X)
    if method != "lapack":
        raise ValueError(f"unknown SVD method {method!r}")
    u, s, vt = np.linalg.svd(X)
    return SvdFactors(u, s, vt.T)


def nuclear_norm(X) -> float:
    return float(np.linalg.svd(np.asarray(X, dtype=np.float64), compute_uv=False).sum())


def project_nuclear_ball(X, r: float, method: str = "lapack") -> np.ndarray:
    """Frobenius projection of a square matrix onto ``{Z : ||Z||_* <= r}``.

    The singular values are projected onto the l1 ball of radius ``r``;
    inside the ball the input is returned unchanged.
    """
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    f = svd(X, method)
    if f.sigma.sum() <= r:
        return np.array(X, dtype=np.float64)
    return (f.u * project_l1_ball(f.sigma, r)) @ f.v.T

"""Brute-force references for the projection routines.

These are slow on purpose: they know nothing about sort pivots or
singular value thresholds, only about distances to sampled feasible points.
"""

from __future__ import annotations

import numpy as np

from .prox import SvdFactors


def l1_ball_grid_projection(v, r: float, spacing: float = 1e-4) -> np.ndarray:
    """Nearest sampled point of the 2-D l1 ball of radius ``r`` to ``v``.

    A point outside the ball projects onto the boundary (strict convexity
    of the distance), so only the diamond's perimeter is sampled, at
    roughly ``spacing`` in each coordinate.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (2,):
        raise ValueError("2-D input required")
    if np.abs(v).sum() <= r:
        return v.copy()
    m = int(np.ceil(r / spacing))
    s = np.linspace(0.0, r, m + 1)
    # four edges of the diamond, corners included
    edges = [np.column_stack([s, r - s]),
             np.column_stack([-s, r - s]),
             np.column_stack([s, s - r]),
             np.column_stack([-s, s - r])]
    P = np.vstack(edges)
    d = np.sum((P - v) ** 2, axis=1)
    return P[int(np.argmin(d))]


def _rot(a):
    c, s = np.cos(a), np.sin(a)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def nuclear_ball_competitors(r: float, angles: int = 48, radii: int = 24) -> np.ndarray:
    """Feasible 2x2 matrices ``R(a) diag(s1, s2) R(b)^T`` on a coarse grid.

    ``a, b`` cover ``[0, pi)`` and signed ``(s1, s2)`` cover the diamond
    ``|s1| + |s2| <= r`` (signs absorb the reflections).  Returns an
    array of shape ``(count, 2, 2)``.
    """
    ang = np.linspace(0.0, np.pi, angles, endpoint=False)
    g = np.linspace(-r, r, 2 * radii + 1)
    s1, s2 = np.meshgrid(g, g, indexing="ij")
    ok = np.abs(s1) + np.abs(s2) <= r + 1e-15
    s1, s2 = s1[ok], s2[ok]
    Ra = _rot(ang)
    out = []
    for i in range(angles):
        # R(a) diag(s) R(b)^T for all b and all s at once
        left = Ra[i][None, None, :, :] * np.stack([s1, s2], -1)[None, :, None, :]
        out.append(np.einsum("bsij,bkj->bsik", np.broadcast_to(left, (angles,) + left.shape[1:]), Ra)
                   .reshape(-1, 2, 2))
    return np.concatenate(out)


def nuclear_ball_margin(X, P, r: float, competitors=None) -> float:
    """``min_k ||C_k - X||_F - ||P - X||_F`` over sampled feasible ``C_k``.

    A projection routine is consistent with the oracle when the returned
    margin is ``>= -tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    C = nuclear_ball_competitors(r) if competitors is None else competitors
    best = float(np.sqrt(np.min(np.sum((C - X) ** 2, axis=(1, 2)))))
    return best - float(np.linalg.norm(np.asarray(P) - X))


def svd_defects(X, f: SvdFactors) -> dict:
    """Invariant defects of an SVD: relative reconstruction error,
    orthogonality of both factors, and the worst ordering violation."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    eye = np.eye(n)
    return {
        "reconstruction": float(np.linalg.norm(f.reconstruct() - X)) / (1.0 + float(np.linalg.norm(X))),
        "u_orthogonality": float(np.abs(f.u.T @ f.u - eye).max()),
        "v_orthogonality": float(np.abs(f.v.T @ f.v - eye).max()),
        "ordering": float(max(0.0, np.max(np.diff(f.sigma), initial=0.0))),
        "negative": float(max(0.0, -np.min(f.sigma, initial=0.0))),
    }

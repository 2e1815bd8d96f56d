"""Total-variation denoising as a dual fixed-point problem.

Images of side ``n`` are handled as column-major vectors of length
``d = n*n``.  The anisotropic TV operator stacks backward differences
within columns on top of backward differences across columns; the first
difference in each direction is zero (no wrap-around).

The primal ``u`` solving ``min 1/2 ||u - x||^2 + mu ||B u||_1`` is
recovered as ``u = x - lam * B^T y`` from a fixed point ``y`` of
``T2 = (I - prox_{(mu/lam)||.||_1}) o A`` with
``A(y) = B x + (I - lam B B^T) y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DimensionError, Operator
from .prox import residual_prox
from .rng import RngState, gaussian_array

PIXEL_MAX = 255.0


def image_to_vector(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise DimensionError(f"square image required, got shape {img.shape}")
    return img.ravel(order="F").copy()


def vector_to_image(u, n: int) -> np.ndarray:
    return np.asarray(u, dtype=np.float64).reshape((n, n), order="F")


def _side(d: int) -> int:
    n = math.isqrt(d)
    if n * n != d:
        raise DimensionError(f"length {d} is not a perfect square")
    return n


def apply_B(u, n: int) -> np.ndarray:
    """Stacked vertical and horizontal backward differences of an image vector."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (n * n,):
        raise DimensionError(f"expected length {n * n}, got shape {u.shape}")
    U = u.reshape((n, n), order="F")
    vert = np.zeros((n, n))
    vert[1:, :] = U[1:, :] - U[:-1, :]
    horz = np.zeros((n, n))
    horz[:, 1:] = U[:, 1:] - U[:, :-1]
    return np.concatenate([vert.ravel(order="F"), horz.ravel(order="F")])


def apply_Bt(y, n: int) -> np.ndarray:
    """Adjoint of :func:`apply_B`."""
    y = np.asarray(y, dtype=np.float64)
    d = n * n
    if y.shape != (2 * d,):
        raise DimensionError(f"expected length {2 * d}, got shape {y.shape}")
    P = y[:d].reshape((n, n), order="F")
    Q = y[d:].reshape((n, n), order="F")
    out = np.zeros((n, n))
    out[1:, :] += P[1:, :]
    out[:-1, :] -= P[1:, :]
    out[:, 1:] += Q[:, 1:]
    out[:, :-1] -= Q[:, 1:]
    return out.ravel(order="F")


def dense_B(n: int) -> np.ndarray:
    """Materialised ``[I kron D; D kron I]``; for checks on small sides."""
    D = np.eye(n) - np.eye(n, k=-1)
    D[0, 0] = 0.0
    eye = np.eye(n)
    return np.vstack([np.kron(eye, D), np.kron(D, eye)])


@dataclass(frozen=True)
class DenoiseProblem:
    """TV denoising instance built around a noisy image vector.

    ``lam`` must be below 1/4 so that ``I - lam B B^T`` stays nonexpansive.
    """

    noisy: np.ndarray
    mu: float = 10.0
    lam: float = 0.999 / 4
    n: int = field(init=False)
    Bx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        noisy = np.asarray(self.noisy, dtype=np.float64)
        if noisy.ndim == 2:
            noisy = image_to_vector(noisy)
        if not np.all(np.isfinite(noisy)):
            raise ValueError("noisy image has non-finite entries")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 0 < self.lam < 0.25:
            raise ValueError(f"lam must lie in (0, 1/4), got {self.lam}")
        noisy.setflags(write=False)
        object.__setattr__(self, "noisy", noisy)
        object.__setattr__(self, "n", _side(noisy.size))
        Bx = apply_B(noisy, self.n)
        Bx.setflags(write=False)
        object.__setattr__(self, "Bx", Bx)

    @property
    def dual_dim(self) -> int:
        return 2 * self.noisy.size

    def initial_dual(self) -> np.ndarray:
        return self.Bx.copy()

    def operator(self, alpha: float = 0.5) -> Operator:
        return Operator(lambda y: t2_apply(y, self), self.dual_dim, alpha, "T2")


def _check_dual(y, prob: DenoiseProblem) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (prob.dual_dim,):
        raise DimensionError(f"expected dual vector of length {prob.dual_dim}, got {y.shape}")
    return y


def apply_A(y, prob: DenoiseProblem) -> np.ndarray:
    """``B x + y - lam B (B^T y)``."""
    y = _check_dual(y, prob)
    return prob.Bx + y - prob.lam * apply_B(apply_Bt(y, prob.n), prob.n)


def t2_apply(y, prob: DenoiseProblem) -> np.ndarray:
    return residual_prox(apply_A(y, prob), prob.mu / prob.lam)


def recover(y, prob: DenoiseProblem) -> np.ndarray:
    """Primal image vector ``x - lam B^T y`` (unclipped)."""
    y = _check_dual(y, prob)
    return prob.noisy - prob.lam * apply_Bt(y, prob.n)


def denoise_ofv(u, prob: DenoiseProblem) -> float:
    """``1/2 ||u - x||^2 + mu ||B u||_1``."""
    u = np.asarray(u, dtype=np.float64)
    r = u - prob.noisy
    return 0.5 * float(np.dot(r, r)) + prob.mu * float(np.abs(apply_B(u, prob.n)).sum())


def psnr(u, reference) -> float:
    """Peak signal-to-noise ratio in dB with peak 255; ``inf`` for identical inputs."""
    u = np.asarray(u, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if u.shape != reference.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {reference.shape}")
    mse = float(np.mean((u - reference) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PIXEL_MAX ** 2 / mse)


def add_gaussian_noise(h, sigma: float, rng: RngState) -> np.ndarray:
    """``h + sigma * z`` with ``z`` drawn in vector order; no clipping.

    ``sigma = 0`` returns a copy without consuming randomness.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    h = np.asarray(h, dtype=np.float64)
    if sigma == 0:
        return h.copy()
    z = gaussian_array(rng, h.size).reshape(h.shape)
    return h + sigma * z


def objective_hook(prob: DenoiseProblem):
    return lambda y: denoise_ofv(recover(y, prob), prob)


def psnr_hook(prob: DenoiseProblem, clean):
    clean = np.asarray(clean, dtype=np.float64)
    if clean.ndim == 2:
        clean = image_to_vector(clean)
    return lambda y: psnr(recover(y, prob), clean)

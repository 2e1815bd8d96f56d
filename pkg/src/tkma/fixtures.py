"""Synthetic test images."""

import hashlib

import numpy as np

BLOCK_LEVELS = (40.0, 110.0, 180.0, 250.0)


def block_image(n: int = 64, levels=BLOCK_LEVELS) -> np.ndarray:
    """``n x n`` piecewise-constant image: four quadrants at ``levels``
    (top-left, top-right, bottom-left, bottom-right)."""
    h = n // 2
    img = np.empty((n, n))
    img[:h, :h], img[:h, h:], img[h:, :h], img[h:, h:] = levels
    return img


def image_digest(img) -> str:
    """SHA-256 of the image as row-major little-endian float64."""
    return hashlib.sha256(np.ascontiguousarray(img, dtype="<f8").tobytes()).hexdigest()

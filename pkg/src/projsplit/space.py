"""Finite-dimensional product space with the gamma-weighted metric.

Vectors are plain 1-D ``float64`` numpy arrays.  A :class:`ProductPoint`
bundles a primal block ``z`` with ``n - 1`` dual blocks stored as one
``(n - 1, d)`` array; the last dual block ``w_n = -sum(w)`` is never stored.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonFiniteError

__all__ = [
    "ProductPoint",
    "as_vector",
    "axpy",
    "gamma_inner",
    "gamma_norm",
    "gamma_norm_sq",
    "wn_of",
    "zero_point",
]


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite value in {what}")
    return arr


def as_vector(a) -> np.ndarray:
    """Coerce to a finite 1-D float64 array (scalars become length 1)."""
    v = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    return _finite(v, "vector")


@dataclass(frozen=True, eq=False)
class ProductPoint:
    """Point ``(z, w_1, ..., w_{n-1})`` of the product space.

    Parameters
    ----------
    z : array_like, shape (d,)
    w : array_like, shape (n - 1, d)
        May have zero rows (``n = 1``).
    gamma : float
        Positive weight on the primal block of the metric.
    """

    z: np.ndarray
    w: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        z = as_vector(self.z)
        w = np.asarray(self.w, dtype=np.float64)
        if w.size == 0:
            w = np.zeros((0, z.size))
        elif w.ndim == 1:
            w = w.reshape(1, -1)
        if w.ndim != 2 or w.shape[1] != z.size:
            raise DimensionError(f"dual blocks of shape {w.shape} do not match dim {z.size}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise DimensionError(f"gamma must be positive and finite, got {self.gamma}")
        _finite(w, "dual blocks")
        z = z.copy()
        w = w.copy()
        z.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self) -> int:
        return self.w.shape[0] + 1

    @property
    def d(self) -> int:
        return self.z.size

    def wn(self) -> np.ndarray:
        return wn_of(self)

    def flat(self) -> np.ndarray:
        """Concatenation ``[z, w_1, ..., w_{n-1}]`` (no metric weighting)."""
        return np.concatenate([self.z, self.w.ravel()])

    def __sub__(self, other: "ProductPoint") -> "ProductPoint":
        return axpy(-1.0, other, self)

    def __add__(self, other: "ProductPoint") -> "ProductPoint":
        return axpy(1.0, other, self)

    def __repr__(self):
        return f"ProductPoint(n={self.n}, d={self.d}, gamma={self.gamma:g})"


def zero_point(n: int, d: int, gamma: float = 1.0) -> ProductPoint:
    return ProductPoint(np.zeros(d), np.zeros((n - 1, d)), gamma)


def _check_pair(p1: ProductPoint, p2: ProductPoint):
    if p1.z.shape != p2.z.shape or p1.w.shape != p2.w.shape:
        raise DimensionError(
            f"shape mismatch: (n={p1.n}, d={p1.d}) vs (n={p2.n}, d={p2.d})")
    if p1.gamma != p2.gamma:
        raise DimensionError(f"gamma mismatch: {p1.gamma} vs {p2.gamma}")


def gamma_norm_sq(p: ProductPoint) -> float:
    """``gamma ||z||^2 + sum_i ||w_i||^2``."""
    return float(p.gamma * np.dot(p.z, p.z) + np.sum(p.w * p.w))


def gamma_norm(p: ProductPoint) -> float:
    return float(np.sqrt(gamma_norm_sq(p)))


def gamma_inner(p1: ProductPoint, p2: ProductPoint) -> float:
    """``gamma <z1, z2> + sum_i <w1_i, w2_i>``; both points must share shape and gamma."""
    _check_pair(p1, p2)
    return float(p1.gamma * np.dot(p1.z, p2.z) + np.sum(p1.w * p2.w))


def axpy(a: float, x: ProductPoint, y: ProductPoint) -> ProductPoint:
    """Componentwise ``a * x + y``."""
    _check_pair(x, y)
    return ProductPoint(a * x.z + y.z, a * x.w + y.w, y.gamma)


def wn_of(p: ProductPoint) -> np.ndarray:
    """Implied last dual block ``-sum_i w_i`` (zero vector when ``n = 1``)."""
    return -p.w.sum(axis=0) if p.w.shape[0] else np.zeros(p.d)

"""Hot per-iteration kernels.

Each kernel exists twice: an explicit-loop version compiled with numba
``@njit`` and a vectorized numpy version.  The numba path is used when numba
imports and ``PROJSPLIT_DISABLE_NUMBA`` is unset (or ``0``); set it to ``1`` to
force the numpy path.  Both paths are exported under ``*_numba`` / ``*_numpy``
names so tests and the benchmark can compare them directly.

Array layout used throughout: ``x`` and ``y`` are ``(n, d)`` stacks of the
per-operator graph points, ``w`` is the ``(n - 1, d)`` stack of free dual
blocks (the last dual block is implied, ``w_n = -sum(w)``).
"""
from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("PROJSPLIT_DISABLE_NUMBA", "0").strip().lower()

try:  # pragma: no cover - import guard
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = HAVE_NUMBA and _FLAG in ("", "0", "false", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------

def hyperplane_numpy(z, w, x, y, gamma):
    """Return ``(u, v, pi, phi)`` for one iteration.

    ``u[i] = x[i] - x[n-1]``, ``v = sum_i y[i]``,
    ``pi = ||u||^2 + ||v||^2 / gamma`` and
    ``phi = sum_i <z - x[i], y[i] - w[i]>`` with ``w[n-1] = -sum(w)``.
    """
    n = x.shape[0]
    xn = x[n - 1]
    u = x[: n - 1] - xn
    v = y.sum(axis=0)
    pi = float(np.sum(u * u) + np.dot(v, v) / gamma)
    wn = -w.sum(axis=0)
    dz = z - x
    phi = float(np.sum(dz[: n - 1] * (y[: n - 1] - w)) + np.dot(dz[n - 1], y[n - 1] - wn))
    return u, v, pi, phi


def project_numpy(z, w, u, v, alpha, gamma):
    """Relaxed projection step: ``z - alpha v / gamma`` and ``w - alpha u``."""
    return z - (alpha / gamma) * v, w - alpha * u


def soft_threshold_numpy(a, t):
    return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)


def clip_numpy(a, lo, hi):
    return np.minimum(np.maximum(a, lo), hi)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

@njit(cache=True)
def _hyperplane_loop(z, w, x, y, gamma):
    n, d = x.shape
    u = np.empty((n - 1, d))
    v = np.zeros(d)
    usq = 0.0
    phi = 0.0
    for j in range(d):
        xn = x[n - 1, j]
        wn = 0.0
        for i in range(n - 1):
            uij = x[i, j] - xn
            u[i, j] = uij
            usq += uij * uij
            wn -= w[i, j]
            phi += (z[j] - x[i, j]) * (y[i, j] - w[i, j])
        phi += (z[j] - xn) * (y[n - 1, j] - wn)
        s = 0.0
        for i in range(n):
            s += y[i, j]
        v[j] = s
    vsq = 0.0
    for j in range(d):
        vsq += v[j] * v[j]
    return u, v, usq + vsq / gamma, phi


@njit(cache=True)
def _project_loop(z, w, u, v, alpha, gamma):
    m, d = w.shape
    zn = np.empty(d)
    wn = np.empty((m, d))
    s = alpha / gamma
    for j in range(d):
        zn[j] = z[j] - s * v[j]
    for i in range(m):
        for j in range(d):
            wn[i, j] = w[i, j] - alpha * u[i, j]
    return zn, wn


@njit(cache=True)
def _soft_threshold_loop(a, t):
    out = np.empty_like(a)
    for j in range(a.shape[0]):
        aj = a[j]
        if aj > t:
            out[j] = aj - t
        elif aj < -t:
            out[j] = aj + t
        else:
            out[j] = 0.0
    return out


@njit(cache=True)
def _clip_loop(a, lo, hi):
    out = np.empty_like(a)
    for j in range(a.shape[0]):
        out[j] = min(max(a[j], lo[j]), hi[j])
    return out


def hyperplane_numba(z, w, x, y, gamma):
    u, v, pi, phi = _hyperplane_loop(z, w, x, y, float(gamma))
    return u, v, float(pi), float(phi)


def project_numba(z, w, u, v, alpha, gamma):
    return _project_loop(z, w, u, v, float(alpha), float(gamma))


def soft_threshold_numba(a, t):
    return _soft_threshold_loop(a, float(t))


def _bound(b, shape):
    b = np.asarray(b, dtype=np.float64)
    if b.shape != shape or not b.flags.c_contiguous:
        b = np.ascontiguousarray(np.broadcast_to(b, shape))
    return b


def clip_numba(a, lo, hi):
    return _clip_loop(a, _bound(lo, a.shape), _bound(hi, a.shape))


if USE_NUMBA:
    hyperplane = hyperplane_numba
    project = project_numba
    soft_threshold = soft_threshold_numba
    clip = clip_numba
else:
    hyperplane = hyperplane_numpy
    project = project_numpy
    soft_threshold = soft_threshold_numpy
    clip = clip_numpy

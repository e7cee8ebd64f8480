"""Monotone operators and their single-step activations.

Two operator kinds enter the splitting:

* :class:`BackwardOperator` -- anything with a computable resolvent
  ``prox(a, rho) = (I + rho T)^{-1} a``.  Activation is one prox call, possibly
  perturbed by an :class:`ErrorInjector`.
* :class:`ForwardOperator` -- single-valued and Lipschitz.  Activation is two
  forward evaluations.

Constructors at the bottom build concrete operators whose metadata
(Lipschitz constant, cocoercivity, strong monotonicity, Lipschitz modulus of
the underlying function) is read off the matrix spectrum, never estimated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg as sla

from . import kernels
from .errors import ActivationError, ConfigurationError, NonFiniteError, StepsizeError

__all__ = [
    "BackwardOperator",
    "ErrorCheck",
    "ErrorInjector",
    "ForwardOperator",
    "OperatorSlot",
    "backward_activate",
    "check_error_conditions",
    "forward_activate",
    "make_affine",
    "make_box_indicator",
    "make_quadratic_gradient",
    "make_scaled_identity",
    "make_soft_threshold",
]

_PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BackwardOperator:
    """Maximal monotone operator accessed through its resolvent.

    Attributes
    ----------
    prox : callable ``(a, rho) -> x``
    name : str
    value : callable, optional
        ``f(x)`` when the operator is the subdifferential of ``f``; may return
        ``inf`` outside the domain.
    in_graph : callable ``(x, y, tol) -> bool``, optional
        Exact membership test ``y in T x`` when the graph is decidable.
    apply : callable, optional
        Evaluation ``T x`` when the operator happens to be single-valued.
    function_lipschitz : float, optional
        Lipschitz modulus ``M`` of ``f`` (on the whole space or the relevant ball).
    lipschitz, cocoercivity : float, optional
        Operator constants, carried as metadata only.
    strong_monotonicity : float
        Modulus ``mu >= 0``.
    """

    prox: Callable[[np.ndarray, float], np.ndarray]
    name: str = "backward"
    value: Optional[Callable[[np.ndarray], float]] = None
    in_graph: Optional[Callable[[np.ndarray, np.ndarray, float], bool]] = None
    apply: Optional[Callable[[np.ndarray], np.ndarray]] = None
    function_lipschitz: Optional[float] = None
    lipschitz: Optional[float] = None
    cocoercivity: Optional[float] = None
    strong_monotonicity: float = 0.0

    is_forward = False


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    """Single-valued ``L``-Lipschitz monotone operator."""

    apply: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    name: str = "forward"
    cocoercivity: Optional[float] = None
    strong_monotonicity: float = 0.0
    value: Optional[Callable[[np.ndarray], float]] = None
    function_lipschitz: Optional[float] = None

    is_forward = True

    def __post_init__(self):
        if not (np.isfinite(self.lipschitz) and self.lipschitz > 0):
            raise ConfigurationError(f"forward operator {self.name!r} needs lipschitz > 0")

    def in_graph(self, x, y, tol):
        return bool(np.allclose(self.apply(x), y, rtol=0.0, atol=tol))


class ErrorCheck(NamedTuple):
    """Outcome of the three inexact-prox conditions.

    Slacks are ``rhs - lhs`` arranged so that a condition holds iff its slack
    is nonnegative.
    """

    ok1: bool
    ok2: bool
    ok3: bool
    slack1: float
    slack2: float
    slack3: float

    @property
    def ok(self) -> bool:
        return self.ok1 and self.ok2 and self.ok3


def check_error_conditions(z, x, y, w, rho, e, sigma, delta, tol=0.0) -> ErrorCheck:
    """Evaluate the admissibility conditions on a prox error ``e``.

    1. ``<z - x, e> >= -sigma ||z - x||^2``
    2. ``<e, y - w> <= rho sigma ||y - w||^2``
    3. ``||e||^2 <= delta ||z - x||^2``

    ``tol`` is an absolute allowance applied to every slack.
    """
    dzx = z - x
    dyw = y - w
    nzx = float(np.dot(dzx, dzx))
    s1 = float(np.dot(dzx, e)) + sigma * nzx
    s2 = rho * sigma * float(np.dot(dyw, dyw)) - float(np.dot(e, dyw))
    s3 = delta * nzx - float(np.dot(e, e))
    return ErrorCheck(s1 >= -tol, s2 >= -tol, s3 >= -tol, s1, s2, s3)


class ErrorInjector:
    """Seeded generator of admissible prox errors.

    Modes
    -----
    ``"none"``
        Always ``e = 0``.
    ``"scaled-random"``
        Random direction with norm ``sqrt(delta) ||z - x0||`` times a uniform
        factor in ``[0.5, 1]``, where ``x0`` is the exact prox point.
    ``"adversarial-aligned"``
        ``e = -c (z - x0)`` with ``c = min(sigma, sqrt(delta))``: pushes against
        the descent direction as far as the bounds allow.

    The candidate is then made admissible by halving (see
    :func:`backward_activate`).
    """

    MODES = ("none", "scaled-random", "adversarial-aligned")

    def __init__(self, mode="none", sigma=0.0, delta=0.0, seed=0):
        if mode not in self.MODES:
            raise ConfigurationError(f"unknown error mode {mode!r}; expected one of {self.MODES}")
        if not 0.0 <= sigma < 1.0:
            raise ConfigurationError(f"sigma must lie in [0, 1), got {sigma}")
        if delta < 0.0:
            raise ConfigurationError(f"delta must be nonnegative, got {delta}")
        self.mode = mode
        self.sigma = float(sigma)
        self.delta = float(delta)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.shrinks = 0
        self.fallbacks = 0

    @property
    def active(self) -> bool:
        return self.mode != "none" and self.delta > 0.0

    def candidate(self, residual: np.ndarray) -> np.ndarray:
        """Draw an error candidate from the exact residual ``z - x0``."""
        r = float(np.linalg.norm(residual))
        if not self.active or r == 0.0:
            return np.zeros_like(residual)
        if self.mode == "scaled-random":
            g = self.rng.standard_normal(residual.shape)
            g /= np.linalg.norm(g)
            return g * np.sqrt(self.delta) * r * self.rng.uniform(0.5, 1.0)
        c = min(self.sigma, np.sqrt(self.delta))
        return -c * residual


@dataclass(eq=False)
class OperatorSlot:
    """Position ``index`` (0-based) of an operator in the sum."""

    index: int
    op: object
    injector: Optional[ErrorInjector] = field(default=None)

    @property
    def is_forward(self) -> bool:
        return self.op.is_forward

    @property
    def name(self) -> str:
        return self.op.name


MAX_SHRINKS = 60
BOX_VALUE_SLACK = 1e-12


def _prox(op, a, rho):
    try:
        x = np.asarray(op.prox(a, rho), dtype=np.float64)
    except (np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        raise ActivationError(f"prox of {op.name!r} failed: {exc}") from exc
    if x.shape != a.shape or not np.all(np.isfinite(x)):
        raise ActivationError(f"prox of {op.name!r} returned an invalid point")
    return x


def backward_activate(slot: OperatorSlot, z, w, rho):
    """Inexact resolvent step: ``a = z + rho w + e``, ``x = prox(a)``, ``y = (a - x)/rho``.

    When the slot carries an active injector, the error candidate is halved
    until all three admissibility conditions hold for the ``(x, y)`` it
    produces; after ``MAX_SHRINKS`` failures the exact step is used.

    Returns
    -------
    x, y, e : ndarray
    """
    if slot.is_forward:
        raise ConfigurationError(f"slot {slot.index} is forward; use forward_activate")
    if not rho > 0:
        raise StepsizeError(f"backward stepsize must be positive, got {rho}")
    op = slot.op
    base = z + rho * w
    inj = slot.injector
    if inj is None or not inj.active:
        x = _prox(op, base, rho)
        return x, (base - x) / rho, np.zeros_like(z)

    x0 = _prox(op, base, rho)
    e = inj.candidate(z - x0)
    for _ in range(MAX_SHRINKS + 1):
        if not np.any(e):
            break
        a = base + e
        x = _prox(op, a, rho)
        y = (a - x) / rho
        if check_error_conditions(z, x, y, w, rho, e, inj.sigma, inj.delta).ok:
            return x, y, e
        e = 0.5 * e
        inj.shrinks += 1
    inj.fallbacks += 1
    return x0, (base - x0) / rho, np.zeros_like(z)


def forward_activate(slot: OperatorSlot, z, w, rho, *, with_tz=False):
    """Two forward evaluations: ``x = z - rho (T z - w)``, ``y = T x``.

    With ``with_tz=True`` also returns ``T z``.
    """
    if not slot.is_forward:
        raise ConfigurationError(f"slot {slot.index} is backward; use backward_activate")
    op = slot.op
    if not 0 < rho < 1.0 / op.lipschitz:
        raise StepsizeError(
            f"forward stepsize for operator {slot.index + 1} ({op.name}) must satisfy "
            f"0 < rho < 1/L = {1.0 / op.lipschitz:.6g}; got {rho:.6g}")
    tz = np.asarray(op.apply(z), dtype=np.float64)
    x = z - rho * (tz - w)
    y = np.asarray(op.apply(x), dtype=np.float64)
    if not (np.all(np.isfinite(tz)) and np.all(np.isfinite(y))):
        raise NonFiniteError(f"forward evaluation of {op.name!r} produced non-finite values")
    if with_tz:
        return x, y, tz
    return x, y


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def _sym_spectrum(A):
    S = 0.5 * (A + A.T)
    ev = np.linalg.eigvalsh(S)
    return S, ev


def _floor_mu(ev):
    """Smallest symmetric eigenvalue, with round-off below the PSD tolerance reported as 0."""
    scale = max(1.0, float(np.max(np.abs(ev))))
    return float(ev[0]) if ev[0] > _PSD_TOL * scale else 0.0


def _check_monotone_matrix(A, what):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"{what}: matrix must be square, got shape {A.shape}")
    _, ev = _sym_spectrum(A)
    scale = max(1.0, float(np.max(np.abs(ev))))
    if ev[0] < -_PSD_TOL * scale:
        raise ConfigurationError(
            f"{what}: symmetric part is not positive semidefinite (lambda_min={ev[0]:.3e})")
    return A, ev


def make_scaled_identity(c: float) -> ForwardOperator:
    """``T z = c z`` for ``c > 0``; gradient of ``c/2 ||z||^2``."""
    if not c > 0:
        raise ConfigurationError(f"scale must be positive, got {c}")
    c = float(c)
    return ForwardOperator(
        apply=lambda z: c * z,
        lipschitz=c,
        cocoercivity=c,
        strong_monotonicity=c,
        value=lambda z: 0.5 * c * float(np.dot(z, z)),
        name=f"{c:g}*I",
    )


def make_quadratic_gradient(A, b, const: float = 0.0) -> ForwardOperator:
    """Gradient ``A z + b`` of ``f(z) = 1/2 z'Az + b'z + const`` for symmetric PSD ``A``."""
    A, ev = _check_monotone_matrix(A, "quadratic")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ConfigurationError("quadratic: matrix must be symmetric")
    A = 0.5 * (A + A.T)
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    lmax = float(max(ev[-1], 0.0))
    if lmax <= 0:
        raise ConfigurationError("quadratic: zero matrix has no positive Lipschitz constant")
    const = float(const)
    return ForwardOperator(
        apply=lambda z: A @ z + b,
        lipschitz=lmax,
        cocoercivity=lmax,
        strong_monotonicity=_floor_mu(ev),
        value=lambda z: 0.5 * float(z @ A @ z) + float(b @ z) + const,
        name="quadratic",
    )


class _AffineResolvent:
    """``(I + rho A)^{-1}(a - rho b)`` with a small factorization cache keyed by ``rho``."""

    def __init__(self, A, b):
        self.A = A
        self.b = b
        self._cache = {}

    def __call__(self, a, rho):
        fac = self._cache.get(rho)
        if fac is None:
            if len(self._cache) > 8:
                self._cache.clear()
            fac = sla.lu_factor(np.eye(self.A.shape[0]) + rho * self.A)
            self._cache[rho] = fac
        return sla.lu_solve(fac, a - rho * self.b)


def make_affine(A, b, *, backward: bool = False):
    """Affine monotone operator ``T z = A z + b``.

    ``A`` may be nonsymmetric as long as its symmetric part is PSD.  Metadata:
    ``L = ||A||_2``, ``mu = lambda_min((A + A')/2)``, and for symmetric ``A``
    the cocoercivity ``Gamma = lambda_max(A)`` together with the objective
    ``1/2 z'Az + b'z``.

    With ``backward=True`` the operator is returned as a
    :class:`BackwardOperator` whose resolvent is a linear solve.
    """
    A, ev = _check_monotone_matrix(A, "affine")
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if b.shape != (A.shape[0],):
        raise ConfigurationError(f"affine: offset shape {b.shape} does not match {A.shape}")
    symmetric = np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max()))
    L = float(np.linalg.norm(A, 2))
    mu = _floor_mu(ev)
    gam = float(ev[-1]) if symmetric and ev[-1] > 0 else None
    value = (lambda z: 0.5 * float(z @ A @ z) + float(b @ z)) if symmetric else None

    def apply(z):
        return A @ z + b

    if backward:
        def in_graph(x, y, tol):
            return bool(np.allclose(apply(x), y, rtol=0.0, atol=tol))

        return BackwardOperator(
            prox=_AffineResolvent(A, b),
            name="affine-backward",
            value=value,
            in_graph=in_graph,
            apply=apply,
            lipschitz=L,
            cocoercivity=gam,
            strong_monotonicity=mu,
        )
    if L <= 0:
        raise ConfigurationError("affine: zero matrix cannot be used as a forward operator")
    return ForwardOperator(
        apply=apply,
        lipschitz=L,
        cocoercivity=gam,
        strong_monotonicity=mu,
        value=value,
        name="affine",
    )


def make_soft_threshold(lam: float, d: Optional[int] = None) -> BackwardOperator:
    """Subdifferential of ``lam ||.||_1``; its prox is soft-thresholding at ``rho lam``.

    When ``d`` is given the function's Lipschitz modulus ``lam sqrt(d)`` is
    recorded.
    """
    if not lam > 0:
        raise ConfigurationError(f"soft threshold level must be positive, got {lam}")
    lam = float(lam)

    def prox(a, rho):
        return kernels.soft_threshold(a, rho * lam)

    def in_graph(x, y, tol):
        on = x != 0
        if np.any(np.abs(y[on] - lam * np.sign(x[on])) > tol):
            return False
        return bool(np.all(np.abs(y[~on]) <= lam + tol))

    return BackwardOperator(
        prox=prox,
        name=f"{lam:g}*l1",
        value=lambda x: lam * float(np.sum(np.abs(x))),
        in_graph=in_graph,
        function_lipschitz=None if d is None else lam * float(np.sqrt(d)),
    )


def make_box_indicator(lo, hi) -> BackwardOperator:
    """Normal cone of the box ``[lo, hi]``; the prox is the projection (``rho``-free)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    if np.any(lo > hi):
        raise ConfigurationError("box: empty (some lo > hi)")

    def prox(a, rho):
        return kernels.clip(a, lo, hi)

    def value(x):
        # averages of boundary points may leave the box by a few ulps
        slack = BOX_VALUE_SLACK * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        inside = np.all((x >= lo - slack) & (x <= hi + slack))
        return 0.0 if inside else float("inf")

    def in_graph(x, y, tol):
        l = np.broadcast_to(lo, x.shape)
        h = np.broadcast_to(hi, x.shape)
        if np.any(x < l) or np.any(x > h):
            return False
        at_lo = x == l
        at_hi = x == h
        free = ~(at_lo | at_hi)
        return bool(np.all(np.abs(y[free]) <= tol)
                    and np.all(y[at_lo & ~at_hi] <= tol)
                    and np.all(y[at_hi & ~at_lo] >= -tol))

    return BackwardOperator(prox=prox, name="box", value=value, in_graph=in_graph)

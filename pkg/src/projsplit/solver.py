"""Synchronous projective splitting.

Every iteration activates all ``n`` operators at the same snapshot
``(z, w)``, forms the affine separator

    phi(p) = sum_i <z - x_i, y_i - w_i>,      w_n = -sum_{i<n} w_i,

and moves ``p`` along ``-grad phi`` (in the gamma-metric) by the relaxed
projection step ``alpha = beta * phi / ||grad phi||^2``.  When the gradient
vanishes the graph points themselves form a solution and are returned.

Operator indices are 0-based in code and 1-based in messages.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, DimensionError, NonFiniteError, ProjSplitError, StepsizeError
from .operators import ErrorInjector, OperatorSlot, backward_activate, forward_activate
from .space import ProductPoint, gamma_norm_sq, zero_point

__all__ = [
    "IterationRecord",
    "ProjectiveSplitting",
    "SolveOutcome",
    "SolveStatus",
    "SolverConfig",
    "StepsizePlan",
    "n1_extragradient_reference",
    "n1_proximal_point_reference",
    "phi_gradient",
    "phi_line_form",
    "phi_value",
    "solve",
]

DEFAULT_FORWARD_FRACTION = 0.9


@dataclass
class StepsizePlan:
    """Resolved per-operator stepsizes with their declared bounds."""

    lower: np.ndarray
    upper: np.ndarray
    rule: Callable[[int, int], float]

    @property
    def rho_min(self) -> float:
        return float(self.lower.min())


@dataclass
class SolverConfig:
    """Parameters of one run.

    ``beta`` and ``rho`` are either constants or callables.  A callable
    ``beta(k)`` needs ``beta_bounds=(lo, hi)``; a callable ``rho(i, k)``
    (``i`` 0-based, ``k`` 1-based) needs ``rho_bounds=(lo_seq, hi_seq)``.
    ``rho=None`` selects 1 for backward slots and ``0.9 / L_i`` for forward
    slots; a scalar applies to every slot; a sequence gives one constant per
    slot (``None`` entries fall back to the default).
    """

    gamma: float = 1.0
    beta: float | Callable[[int], float] = 1.0
    beta_bounds: Optional[tuple[float, float]] = None
    rho: None | float | Sequence[Optional[float]] | Callable[[int, int], float] = None
    rho_bounds: Optional[tuple[Sequence[float], Sequence[float]]] = None
    sigma: float = 0.0
    delta: float = 0.0
    error_mode: str = "none"
    error_seed: int = 0
    max_iters: int = 1000
    pi_tolerance: float = 1e-24
    trace_stride: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        lo, hi = self.beta_range()
        if not 0 < lo <= hi < 2:
            raise StepsizeError(f"relaxation bounds must satisfy 0 < lo <= hi < 2, got ({lo}, {hi})")
        if not 0 <= self.sigma < 1:
            raise ConfigurationError(f"sigma must lie in [0, 1), got {self.sigma}")
        if self.delta < 0:
            raise ConfigurationError(f"delta must be nonnegative, got {self.delta}")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be nonnegative")
        if self.pi_tolerance < 0:
            raise ConfigurationError("pi_tolerance must be nonnegative")
        if self.trace_stride < 1:
            raise ConfigurationError("trace_stride must be >= 1")

    def beta_range(self) -> tuple[float, float]:
        if callable(self.beta):
            if self.beta_bounds is None:
                raise ConfigurationError("a callable beta needs beta_bounds")
            return float(self.beta_bounds[0]), float(self.beta_bounds[1])
        b = float(self.beta)
        return b, b

    def beta_at(self, k: int) -> float:
        b = float(self.beta(k)) if callable(self.beta) else float(self.beta)
        lo, hi = self.beta_range()
        if not lo <= b <= hi:
            raise StepsizeError(f"beta_{k} = {b} outside declared bounds [{lo}, {hi}]")
        return b

    def stepsizes(self, slots: Sequence[OperatorSlot]) -> StepsizePlan:
        """Resolve the stepsize rule against the operators and validate its bounds."""
        return self.stepsize_plan([s.is_forward for s in slots],
                                  [s.op.lipschitz for s in slots],
                                  [s.name for s in slots])

    def stepsize_plan(self, forward: Sequence[bool], lipschitz: Sequence,
                      names: Optional[Sequence[str]] = None) -> StepsizePlan:
        """Same as :meth:`stepsizes` from per-operator flags and Lipschitz constants."""
        n = len(forward)
        names = list(names) if names is not None else [f"T{i + 1}" for i in range(n)]
        if callable(self.rho):
            if self.rho_bounds is None:
                raise ConfigurationError("a callable rho needs rho_bounds")
            lower = np.asarray(self.rho_bounds[0], dtype=float).reshape(-1)
            upper = np.asarray(self.rho_bounds[1], dtype=float).reshape(-1)
            if lower.size == 1:
                lower = np.full(n, lower[0])
            if upper.size == 1:
                upper = np.full(n, upper[0])
            rule = self.rho
        else:
            if self.rho is None or np.isscalar(self.rho):
                given = [self.rho] * n
            else:
                given = list(self.rho)
                if len(given) != n:
                    raise ConfigurationError(f"rho has {len(given)} entries for {n} operators")
            vals = []
            for fw, L, r in zip(forward, lipschitz, given):
                if r is None:
                    r = DEFAULT_FORWARD_FRACTION / L if fw else 1.0
                vals.append(float(r))
            lower = np.array(vals)
            upper = np.array(vals)
            const = tuple(vals)

            def rule(i, k, _c=const):
                return _c[i]

        if lower.shape != (n,) or upper.shape != (n,):
            raise ConfigurationError("rho bounds must have one entry per operator")
        for i, fw in enumerate(forward):
            if not (lower[i] > 0 and lower[i] <= upper[i] and np.isfinite(upper[i])):
                raise StepsizeError(
                    f"stepsize bounds for operator {i + 1} must satisfy 0 < lo <= hi < inf, "
                    f"got ({lower[i]}, {upper[i]})")
            if fw and not upper[i] < 1.0 / lipschitz[i]:
                raise StepsizeError(
                    f"stepsize condition violated: forward operator {i + 1} ({names[i]}) needs "
                    f"rho < 1/L = {1.0 / lipschitz[i]:.17g}, got {upper[i]:.17g}")
        return StepsizePlan(lower, upper, rule)


@dataclass(eq=False)
class IterationRecord:
    """Everything computed in iteration ``k``.

    ``x``, ``y``, ``e`` and ``tz`` are ``(n, d)`` stacks; ``e`` is zero on
    forward rows and ``tz`` (the forward evaluation at ``z``) is zero on
    backward rows.  ``terminal`` marks the zero-gradient branch, in which
    ``p_after`` is the returned solution tuple and ``alpha`` is 0.
    """

    k: int
    x: np.ndarray
    y: np.ndarray
    e: np.ndarray
    tz: np.ndarray
    rho: np.ndarray
    beta: float
    u: np.ndarray
    v: np.ndarray
    phi: float
    pi: float
    alpha: float
    p_before: ProductPoint
    p_after: ProductPoint
    terminal: bool = False

    @property
    def n(self) -> int:
        return self.x.shape[0]


class SolveStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STOPPED = "stopped"
    ERROR = "error"


@dataclass(eq=False)
class SolveOutcome:
    status: SolveStatus
    point: ProductPoint
    trace: list = field(default_factory=list)
    iterations: int = 0
    message: str = ""

    @property
    def z(self) -> np.ndarray:
        return self.point.z

    @property
    def w(self) -> np.ndarray:
        return self.point.w


def phi_value(record: IterationRecord, p: ProductPoint) -> float:
    """Evaluate the separator of iteration ``record.k`` at an arbitrary point."""
    if p.n != record.n or p.d != record.x.shape[1]:
        raise DimensionError("point shape does not match the record")
    wfull = np.vstack([p.w, p.wn()[None, :]])
    return float(np.sum((p.z[None, :] - record.x) * (record.y - wfull)))


def phi_line_form(record: IterationRecord) -> float:
    """Separator at the iterate in expanded form ``<z,v> + sum <w_i,u_i> - sum <x_i,y_i>``."""
    p = record.p_before
    return float(np.dot(p.z, record.v) + np.sum(p.w * record.u) - np.sum(record.x * record.y))


def phi_gradient(record: IterationRecord) -> ProductPoint:
    """Gradient of the separator in the gamma-metric: ``(v / gamma, u_1, ..., u_{n-1})``."""
    g = record.p_before.gamma
    return ProductPoint(record.v / g, record.u, g)


def _injectors(slots, config):
    if config.error_mode == "none" or config.delta == 0.0:
        return
    seeds = np.random.SeedSequence(config.error_seed).spawn(len(slots))
    for s, ss in zip(slots, seeds):
        if not s.is_forward:
            s.injector = ErrorInjector(config.error_mode, config.sigma, config.delta,
                                       seed=int(ss.generate_state(1)[0]))


class ProjectiveSplitting:
    """Iteration state for one run.

    Parameters
    ----------
    slots : sequence of OperatorSlot
    config : SolverConfig
    p1 : ProductPoint, optional
        Starting point; defaults to the origin.  Its gamma is replaced by the
        configured one.
    dim : int, optional
        Needed only when ``p1`` is omitted.
    """

    def __init__(self, slots: Sequence[OperatorSlot], config: SolverConfig,
                 p1: Optional[ProductPoint] = None, dim: Optional[int] = None):
        if not slots:
            raise ConfigurationError("need at least one operator")
        # copies, so per-run injectors never leak into a shared problem instance
        self.slots = [OperatorSlot(s.index, s.op, s.injector) for s in slots]
        for i, s in enumerate(self.slots):
            if s.index != i:
                raise ConfigurationError(f"slot at position {i} carries index {s.index}")
        self.config = config
        self.n = len(self.slots)
        if p1 is None:
            if dim is None:
                raise ConfigurationError("give either a starting point or a dimension")
            p1 = zero_point(self.n, dim, config.gamma)
        if p1.n != self.n:
            raise DimensionError(f"starting point has {p1.n} blocks for {self.n} operators")
        self.d = p1.d
        self.gamma = config.gamma
        self.z = np.array(p1.z)
        self.w = np.array(p1.w)
        self.k = 1
        self.plan = config.stepsizes(self.slots)
        self.forward_mask = np.array([s.is_forward for s in self.slots])
        _injectors(self.slots, config)

    @property
    def point(self) -> ProductPoint:
        return ProductPoint(self.z, self.w, self.gamma)

    def iterate(self) -> IterationRecord:
        """Run one full iteration and advance the state."""
        k, n, d = self.k, self.n, self.d
        z, w = self.z, self.w
        wfull = np.vstack([w, -w.sum(axis=0)[None, :]]) if n > 1 else np.zeros((1, d))
        beta = self.config.beta_at(k)
        X = np.empty((n, d))
        Y = np.empty((n, d))
        E = np.zeros((n, d))
        TZ = np.zeros((n, d))
        rho = np.empty(n)
        for i, slot in enumerate(self.slots):
            r = float(self.plan.rule(i, k))
            if not self.plan.lower[i] <= r <= self.plan.upper[i]:
                raise StepsizeError(
                    f"rho for operator {i + 1} at iteration {k} is {r}, outside "
                    f"[{self.plan.lower[i]}, {self.plan.upper[i]}]")
            rho[i] = r
            if slot.is_forward:
                X[i], Y[i], TZ[i] = forward_activate(slot, z, wfull[i], r, with_tz=True)
            else:
                X[i], Y[i], E[i] = backward_activate(slot, z, wfull[i], r)

        u, v, pi, phi = kernels.hyperplane(z, w, X, Y, self.gamma)
        if not (np.isfinite(pi) and np.isfinite(phi)):
            raise NonFiniteError(f"non-finite hyperplane quantities at iteration {k}")
        p_before = ProductPoint(z, w, self.gamma)
        scale = max(1.0, gamma_norm_sq(p_before))
        terminal = pi <= self.config.pi_tolerance * scale
        if terminal:
            alpha = 0.0
            z_new, w_new = X[n - 1].copy(), Y[: n - 1].copy()
        else:
            alpha = beta * phi / pi
            z_new, w_new = kernels.project(z, w, u, v, alpha, self.gamma)
        if not (np.all(np.isfinite(z_new)) and np.all(np.isfinite(w_new))):
            raise NonFiniteError(f"non-finite iterate after iteration {k}")
        self.z, self.w = z_new, w_new
        self.k = k + 1
        return IterationRecord(
            k=k, x=X, y=Y, e=E, tz=TZ, rho=rho, beta=beta, u=u, v=v,
            phi=phi, pi=pi, alpha=alpha, p_before=p_before,
            p_after=ProductPoint(z_new, w_new, self.gamma), terminal=terminal)


def solve(problem, config: SolverConfig, p1: Optional[ProductPoint] = None, *,
          stop: Optional[Callable[[IterationRecord], bool]] = None,
          callback: Optional[Callable[[IterationRecord], None]] = None,
          raise_errors: bool = True) -> SolveOutcome:
    """Iterate until the zero-gradient branch, ``max_iters``, or ``stop(record)`` is true.

    ``problem`` is a :class:`~projsplit.problems.ProblemInstance` or a plain
    sequence of slots (then ``p1`` is required).  ``callback`` sees every
    record, including those dropped by ``trace_stride``.
    """
    slots = getattr(problem, "slots", problem)
    if p1 is None:
        p1 = getattr(problem, "start", None)
        if p1 is None:
            raise ConfigurationError("no starting point given")
    if p1.gamma != config.gamma:
        p1 = ProductPoint(p1.z, p1.w, config.gamma)
    state = ProjectiveSplitting(slots, config, p1)
    trace = []
    status = SolveStatus.MAX_ITERS
    message = ""
    stride = config.trace_stride
    try:
        for _ in range(config.max_iters):
            rec = state.iterate()
            if callback is not None:
                callback(rec)
            last = rec.terminal or state.k > config.max_iters
            if (rec.k - 1) % stride == 0 or last:
                trace.append(rec)
            if rec.terminal:
                status = SolveStatus.CONVERGED
                break
            if stop is not None and stop(rec):
                status = SolveStatus.STOPPED
                if not trace or trace[-1] is not rec:
                    trace.append(rec)
                break
    except ProjSplitError as exc:
        if raise_errors:
            raise
        status = SolveStatus.ERROR
        message = str(exc)
    return SolveOutcome(status, state.point, trace, state.k - 1, message)


def _as_seq(val, k):
    if callable(val):
        return val
    if np.isscalar(val):
        return lambda t: float(val)
    seq = list(val)
    return lambda t: float(seq[t - 1])


def n1_proximal_point_reference(prox, rho, beta, z1, k: int) -> np.ndarray:
    """Relaxed proximal-point recursion ``z+ = (1 - beta) z + beta prox_rho(z)``.

    ``rho`` and ``beta`` are constants, sequences indexed from iteration 1, or
    callables of the iteration number.  Returns ``z^1, ..., z^{k+1}`` stacked
    as rows.
    """
    rho_t, beta_t = _as_seq(rho, k), _as_seq(beta, k)
    z = np.atleast_1d(np.asarray(z1, dtype=float)).copy()
    out = [z.copy()]
    for t in range(1, k + 1):
        b = beta_t(t)
        z = (1.0 - b) * z + b * prox(z, rho_t(t))
        out.append(z.copy())
    return np.array(out)


def n1_extragradient_reference(T, rho, beta, z1, k: int) -> np.ndarray:
    """Extragradient recursion with the adaptive second stepsize.

    ``x = z - rho T z`` and ``z+ = z - rho_tilde T x`` with
    ``rho_tilde = beta rho <T z, T x> / ||T x||^2``.  Stops early (returning
    ``x`` as the final row) when ``T x = 0``.
    """
    rho_t, beta_t = _as_seq(rho, k), _as_seq(beta, k)
    z = np.atleast_1d(np.asarray(z1, dtype=float)).copy()
    out = [z.copy()]
    for t in range(1, k + 1):
        r = rho_t(t)
        tz = T(z)
        x = z - r * tz
        tx = T(x)
        nx = float(np.dot(tx, tx))
        if nx == 0.0:
            out.append(x.copy())
            break
        step = beta_t(t) * r * float(np.dot(tz, tx)) / nx
        z = z - step * tx
        out.append(z.copy())
    return np.array(out)

"""Derived rate constants and per-run certificates.

Given the problem metadata, the solver configuration and an oracle solution
``p* = (z*, w*)``, this module computes every constant appearing in the
convergence analysis and checks each proved inequality along a recorded
trace.  A :class:`Certificate` reports the worst violation
``measured - bound`` over the run; it passes iff that number does not exceed
the certificate's tolerance.

Traces must be complete (``trace_stride=1``): running sums and ergodic
averages need every iteration.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, MetadataError
from .space import ProductPoint

__all__ = [
    "CERTIFICATE_NAMES",
    "Certificate",
    "ProblemMeta",
    "RateConstants",
    "SummabilityLedger",
    "TOLERANCES",
    "certify",
    "check_alpha_lb",
    "check_bounds",
    "check_ergodic_gap",
    "check_ergodic_gap_single",
    "check_fejer",
    "check_grad_ub",
    "check_linear_contraction",
    "check_phi_lb",
    "check_separation",
    "check_strong_rate",
    "check_summability",
    "compute_constants",
    "ergodic_averages",
    "update_ledger",
]

TOLERANCES = {
    "fejer": 1e-9,
    "separation": 1e-9,
    "phi_lb": 1e-9,
    "grad_ub": 1e-9,
    "alpha_lb": 1e-12,
    "summability": 1e-8,
    "bounds": 1e-9,
    "ergodic_gap": 1e-8,
    "ergodic_gap_single": 1e-8,
    "strong_rate": 1e-8,
    "linear_contraction": 1e-12,
}

CERTIFICATE_NAMES = tuple(TOLERANCES)


# ---------------------------------------------------------------------------
# metadata
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ProblemMeta:
    """Constants and oracle attached to a problem instance.

    Per-operator lists are indexed 0-based and have length ``n``; entries are
    ``None`` where the constant is unknown or meaningless.
    """

    n: int
    forward: tuple
    lipschitz: list
    cocoercivity: list
    function_lipschitz: list
    strong_monotonicity: float = 0.0
    strong_index: Optional[int] = None
    z_star: Optional[np.ndarray] = None
    w_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    objectives: Optional[list] = None
    rate_E4_applicable: bool = True

    def __post_init__(self):
        self.forward = tuple(bool(f) for f in self.forward)
        if len(self.forward) != self.n:
            raise ConfigurationError("forward flags must have one entry per operator")
        for name in ("lipschitz", "cocoercivity", "function_lipschitz"):
            vals = list(getattr(self, name))
            if len(vals) != self.n:
                raise ConfigurationError(f"{name} must have one entry per operator")
            setattr(self, name, vals)
        for i in self.forward_indices:
            if self.lipschitz[i] is None or not self.lipschitz[i] > 0:
                raise ConfigurationError(f"forward operator {i + 1} needs a positive Lipschitz constant")
        if self.strong_monotonicity > 0 and self.strong_index is None:
            raise ConfigurationError("a strongly monotone instance must name its strongly monotone operator")
        if self.z_star is not None:
            self.z_star = np.asarray(self.z_star, dtype=float)
            w = np.asarray(self.w_star if self.w_star is not None else np.zeros((0, self.z_star.size)),
                           dtype=float)
            self.w_star = w.reshape(self.n - 1, self.z_star.size)

    @classmethod
    def from_slots(cls, slots, **kw) -> "ProblemMeta":
        ops = [s.op for s in slots]
        mus = [float(op.strong_monotonicity or 0.0) for op in ops]
        l = int(np.argmax(mus)) if max(mus) > 0 else None
        objectives = kw.pop("objectives", None)
        if objectives is None and all(op.value is not None for op in ops):
            objectives = [op.value for op in ops]
        return cls(
            n=len(ops),
            forward=[op.is_forward for op in ops],
            lipschitz=[op.lipschitz for op in ops],
            cocoercivity=[op.cocoercivity for op in ops],
            function_lipschitz=[op.function_lipschitz for op in ops],
            strong_monotonicity=max(mus),
            strong_index=l,
            objectives=objectives,
            **kw,
        )

    @property
    def forward_indices(self) -> list:
        return [i for i, f in enumerate(self.forward) if f]

    @property
    def backward_indices(self) -> list:
        return [i for i, f in enumerate(self.forward) if not f]

    @property
    def has_oracle(self) -> bool:
        return self.z_star is not None

    def p_star(self, gamma: float) -> ProductPoint:
        if not self.has_oracle:
            raise MetadataError("oracle solution required")
        return ProductPoint(self.z_star, self.w_star, gamma)

    def designated_index(self) -> tuple[int, list]:
        """Index ``j`` for the single-point ergodic rate and the Lipschitz set it leaves.

        With several backward operators all but one must have a Lipschitz
        objective; ``j`` is the exception.
        """
        if not self.rate_E4_applicable:
            raise ConfigurationError(
                "single-point rate not applicable: more than one backward operator lacks "
                "a Lipschitz objective")
        back = self.backward_indices
        if not back:
            return self.forward_indices[0], []
        if len(back) == 1:
            return back[0], []
        lip = [i for i in back if self.function_lipschitz[i] is not None]
        rest = [i for i in back if i not in lip]
        if len(rest) > 1:
            raise ConfigurationError(
                f"single-point rate not applicable: backward operators "
                f"{[i + 1 for i in rest]} have no Lipschitz modulus")
        if not rest:
            j = back[0]
            return j, [i for i in lip if i != j]
        return rest[0], lip


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

@dataclass
class RateConstants:
    """Constants of the convergence analysis for one (problem, config, start) triple.

    Fields that need unavailable metadata are ``None``; :meth:`require`
    raises :class:`MetadataError` for them.
    """

    n: int
    gamma: float
    beta_lo: float
    beta_hi: float
    rho_min: float
    rho_bar: float
    rho_bar_last: float
    L_bar: float
    n_forward: int
    sigma: float
    delta: float
    xi1: float
    xi2: float
    tau: float
    alpha_lb: float
    E1: float
    E2: float
    E3: Optional[float] = None
    E4: Optional[float] = None
    E5: Optional[float] = None
    Bx: Optional[float] = None
    By: Optional[float] = None
    mu: Optional[float] = None
    Gamma_bar: Optional[float] = None
    p_star_norm: Optional[float] = None
    dist1: Optional[float] = None
    strong_rate_factor: Optional[float] = None
    contraction_weight: float = 1.0

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise MetadataError(f"metadata required for {', '.join(missing)}")

    def table(self) -> dict:
        keys = ("xi1", "xi2", "tau", "alpha_lb", "E1", "E2", "E3", "E4", "E5", "Bx", "By")
        return {k: getattr(self, k) for k in keys}

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _stepsize_bounds(meta: ProblemMeta, config):
    return config.stepsize_plan(meta.forward, meta.lipschitz)


def compute_constants(meta: ProblemMeta, config, p1: Optional[ProductPoint] = None,
                      require: Sequence[str] = ()) -> RateConstants:
    """Evaluate every constant the metadata allows.

    ``p1`` (the starting point) together with the oracle in ``meta`` enables
    the constants that depend on ``||p*||`` and ``||p1 - p*||``.
    ``require`` names fields that must come out finite.
    """
    n = meta.n
    gamma = float(config.gamma)
    b_lo, b_hi = config.beta_range()
    plan = _stepsize_bounds(meta, config)
    fwd = meta.forward_indices
    back = meta.backward_indices
    sigma, delta = float(config.sigma), float(config.delta)

    rho_min = float(plan.lower.min())
    rho_bar = max((float(plan.upper[i]) for i in back), default=0.0)
    L_bar = max((float(meta.lipschitz[i]) for i in fwd), default=0.0)
    rho_bar_last = float(plan.upper[n - 1]) if (n - 1) in back else 0.0

    xi1 = 2 * n * (1 + 2 / gamma * (L_bar ** 2 * len(fwd) + (1 + delta) / rho_min ** 2))
    cands = []
    if back:
        cands.append((1 - sigma) / rho_bar)
    cands.extend(1 / float(plan.upper[j]) - float(meta.lipschitz[j]) for j in fwd)
    xi2 = min(cands)
    if not xi2 > 0:
        raise ConfigurationError(f"stepsizes give a nonpositive lower-bound constant ({xi2})")
    tau = 1 / (b_lo * (2 - b_hi))
    alpha_lb = b_lo * xi2 / xi1
    E1 = (2 / (1 - sigma) / rho_min * (1 + L_bar / xi2 * (1 + rho_min * L_bar))
          * xi1 / (b_lo ** 2 * xi2))
    E2 = xi1 / (2 * b_lo * xi2) * (
        1 + (3 + 2 * E1) * tau
        + rho_bar_last * tau * (2 + gamma * E1 + gamma * delta * xi1 / (b_lo ** 2 * xi2 ** 2)))

    c = RateConstants(
        n=n, gamma=gamma, beta_lo=b_lo, beta_hi=b_hi, rho_min=rho_min, rho_bar=rho_bar,
        rho_bar_last=rho_bar_last, L_bar=L_bar, n_forward=len(fwd), sigma=sigma, delta=delta,
        xi1=xi1, xi2=xi2, tau=tau, alpha_lb=alpha_lb, E1=E1, E2=E2,
        contraction_weight=b_lo * (2 - b_lo) if b_lo <= 1 <= b_hi else min(
            b_lo * (2 - b_lo), b_hi * (2 - b_hi)),
    )

    if meta.strong_monotonicity > 0:
        c.mu = float(meta.strong_monotonicity)
        c.strong_rate_factor = 0.5 * (1 + tau) * xi1 / (b_lo * xi2 * c.mu)
        cocos = [meta.cocoercivity[i] for i in range(n - 1)]
        if all(g is not None for g in cocos):
            c.Gamma_bar = max(cocos, default=0.0)
            xi5 = max(1 / c.mu, c.Gamma_bar)
            c.E5 = 0.5 / ((8 * xi1 ** 2 * (1 + gamma) ** 2 * xi5 ** 2 + 2 * gamma * xi1)
                          / (b_lo ** 2 * xi2 ** 2) + 2 * E1)

    if meta.has_oracle:
        ps = meta.p_star(gamma)
        pnorm = float(np.sqrt(gamma * ps.z @ ps.z + np.sum(ps.w ** 2)))
        c.p_star_norm = pnorm
        c.E3 = 2 * np.sqrt(n) * pnorm * xi1 / (b_lo * xi2)
        if p1 is not None:
            dz = p1.z - ps.z
            dw = p1.w - ps.w
            r2 = float(gamma * dz @ dz + np.sum(dw ** 2))
            c.dist1 = float(np.sqrt(r2))
            c.Bx = float(np.sqrt(2 * (xi1 / xi2 ** 2 + 1 / gamma) * r2 + 2 / gamma * pnorm ** 2))
            c.By = float(np.sqrt(2 * (n + E1) * r2 + 2 * n * pnorm ** 2))
            try:
                _, lip = meta.designated_index()
            except ConfigurationError:
                lip = None
            if lip is not None and all(meta.function_lipschitz[i] is not None for i in lip):
                msum = sum(float(meta.function_lipschitz[i]) for i in lip)
                c.E4 = c.E3 + 4 * xi1 / (b_lo * xi2) * (msum + n * c.By * (1 + 2 * L_bar * c.Bx))
    c.require(*require)
    return c


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Certificate:
    """Verdict of one proved inequality over a run.

    ``violations`` holds ``measured - bound`` per checked iteration (or per
    checked sub-inequality); ``residual`` is its maximum.
    """

    kind: str
    residual: float
    tolerance: float
    violations: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    detail: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return bool(self.residual <= self.tolerance)

    @property
    def passed(self) -> bool:
        return self.verdict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": "pass" if self.verdict else "fail",
            "residual": _json_float(self.residual),
            "tolerance": self.tolerance,
            "checked": int(self.violations.size),
            "detail": {k: _json_float(v) for k, v in self.detail.items()},
        }


def _json_float(v):
    if isinstance(v, (bool, str)) or v is None:
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if np.isfinite(v) else repr(v)


def _cert(kind, viol, tol=None, **detail):
    viol = np.asarray(viol, dtype=float).reshape(-1)
    worst = float(viol.max()) if viol.size else float("-inf")
    if np.isnan(viol).any():
        worst = float("inf")
    return Certificate(kind, worst, TOLERANCES[kind] if tol is None else tol, viol, detail)


def _steps(trace):
    """Non-terminal records of a complete trace."""
    ks = [r.k for r in trace]
    if ks and ks != list(range(ks[0], ks[0] + len(ks))):
        raise ConfigurationError("certificates need a complete trace (trace_stride=1)")
    return [r for r in trace if not r.terminal]


def _sqdist(p: ProductPoint, q: ProductPoint) -> float:
    dz = p.z - q.z
    dw = p.w - q.w
    return float(p.gamma * dz @ dz + np.sum(dw * dw))


def _wfull(p: ProductPoint) -> np.ndarray:
    return np.vstack([p.w, -p.w.sum(axis=0)[None, :]]) if p.n > 1 else np.zeros((1, p.d))


def _zx_sq(rec) -> float:
    d = rec.p_before.z[None, :] - rec.x
    return float(np.sum(d * d))


def _phi_at(rec, p: ProductPoint) -> float:
    return float(np.sum((p.z[None, :] - rec.x) * (rec.y - _wfull(p))))


def _p_star(meta, constants):
    return meta.p_star(constants.gamma)


def check_fejer(trace, meta, constants) -> Certificate:
    """``||p+ - p*||^2 <= ||p - p*||^2 - beta (2 - beta) ||p+ - p||^2`` at every step."""
    ps = _p_star(meta, constants)
    v = [
        _sqdist(r.p_after, ps) - _sqdist(r.p_before, ps)
        + r.beta * (2 - r.beta) * _sqdist(r.p_after, r.p_before)
        for r in _steps(trace)
    ]
    return _cert("fejer", v)


def check_separation(trace, meta, constants) -> Certificate:
    """The separator is nonpositive at the oracle solution."""
    ps = _p_star(meta, constants)
    return _cert("separation", [_phi_at(r, ps) for r in trace])


def check_phi_lb(trace, meta, constants) -> Certificate:
    """Lower bounds on the separator at the iterate (two inequalities per step)."""
    c = constants
    fwd = np.array(meta.forward)
    L = np.array([meta.lipschitz[i] if meta.forward[i] else 0.0 for i in range(meta.n)], dtype=float)
    v1, v2 = [], []
    for r in trace:
        zx = r.p_before.z[None, :] - r.x
        zx_i = np.sum(zx * zx, axis=1)
        v1.append(c.xi2 * zx_i.sum() - r.phi)
        wf = _wfull(r.p_before)
        yw = np.sum((r.y - wf) ** 2, axis=1)
        tzw = np.sum((r.tz - wf) ** 2, axis=1)
        rhs = (1 - c.sigma) * c.rho_min * yw[~fwd].sum() + c.rho_min * tzw[fwd].sum()
        v2.append(rhs - r.phi - float(L[fwd] @ zx_i[fwd]))
    return _cert("phi_lb", np.concatenate([v1, v2]),
                 phi_lb=max(v1, default=-np.inf), residual_lb=max(v2, default=-np.inf))


def check_grad_ub(trace, meta, constants) -> Certificate:
    """``||grad phi||^2 <= xi1 sum_i ||z - x_i||^2``."""
    return _cert("grad_ub", [r.pi - constants.xi1 * _zx_sq(r) for r in trace])


def check_alpha_lb(trace, meta, constants) -> Certificate:
    """Projection steps never fall below ``beta_lo xi2 / xi1``."""
    return _cert("alpha_lb", [constants.alpha_lb - r.alpha for r in _steps(trace)])


@dataclass(eq=False)
class SummabilityLedger:
    """Running sums along a run and their caps.

    Keys (all sums over completed iterations ``t <= k``):

    ``step``     sum ||p+ - p||^2_gamma                <= tau R^2
    ``z``        sum ||z+ - z||^2                      <= tau R^2 / gamma
    ``w``        sum_t sum_i ||w_i+ - w_i||^2          <= tau R^2
    ``zx``       sum_i ||z - x_i||^2 (this step)       <= xi1 / (beta^2 xi2^2) ||p+ - p||^2
    ``zx_sum``   the same summed over t               <= tau xi1 / (beta^2 xi2^2) R^2
    ``wy``       sum_i ||w_i - y_i||^2 (this step)     <= E1 ||p+ - p||^2
    ``wy_sum``   the same summed over t               <= tau E1 R^2
    ``wtz_sum``  sum over forward i of ||w_i - T_i z||^2 <= tau E1 R^2
    ``phi_sum``  sum phi_t(p^t)                        <= tau xi1 / (beta^2 xi2) R^2

    where ``R = ||p^1 - p*||_gamma`` and ``beta`` is the lower relaxation bound.
    """

    constants: RateConstants
    dist1_sq: float
    forward: np.ndarray
    sums: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)
    k: int = 0

    KEYS = ("step", "z", "w", "zx", "zx_sum", "wy", "wy_sum", "wtz_sum", "phi_sum")

    def __post_init__(self):
        c, R2 = self.constants, self.dist1_sq
        self.forward = np.asarray(self.forward, dtype=bool)
        b2 = c.beta_lo ** 2
        self.caps = {
            "step": c.tau * R2,
            "z": c.tau * R2 / c.gamma,
            "w": c.tau * R2,
            "zx_sum": c.tau * c.xi1 / (b2 * c.xi2 ** 2) * R2,
            "wy_sum": c.tau * c.E1 * R2,
            "wtz_sum": c.tau * c.E1 * R2,
            "phi_sum": c.tau * c.xi1 / (b2 * c.xi2) * R2,
        }
        self.sums = {k: 0.0 for k in self.KEYS}
        self.history = {k: [] for k in self.KEYS}

    def update(self, rec) -> "SummabilityLedger":
        if rec.terminal:
            return self
        c = self.constants
        pb, pa = rec.p_before, rec.p_after
        dz = pa.z - pb.z
        dzsq = float(dz @ dz)
        dwsq = float(np.sum((pa.w - pb.w) ** 2))
        step = c.gamma * dzsq + dwsq
        zx_i = np.sum((pb.z[None, :] - rec.x) ** 2, axis=1)
        wf = _wfull(pb)
        wy = float(np.sum((wf - rec.y) ** 2))
        wtz = float(np.sum(((wf - rec.tz) ** 2)[self.forward]))
        s = self.sums
        s["step"] += step
        s["z"] += dzsq
        s["w"] += dwsq
        s["zx"] = float(zx_i.sum())
        s["zx_sum"] += float(zx_i.sum())
        s["wy"] = wy
        s["wy_sum"] += wy
        s["wtz_sum"] += wtz
        s["phi_sum"] += rec.phi
        self.caps["zx"] = c.xi1 / (c.beta_lo ** 2 * c.xi2 ** 2) * step
        self.caps["wy"] = c.E1 * step
        for key in self.KEYS:
            self.history[key].append(s[key] - self.caps[key])
        self.k = rec.k
        return self

    def residuals(self) -> dict:
        """Current ``sum - cap`` per key (positive means a violated cap)."""
        return {k: self.sums[k] - self.caps[k] for k in self.KEYS if k in self.caps}

    def worst(self) -> dict:
        return {k: (max(v) if v else float("-inf")) for k, v in self.history.items()}


def update_ledger(ledger: SummabilityLedger, record) -> SummabilityLedger:
    return ledger.update(record)


def new_ledger(meta, constants) -> SummabilityLedger:
    if constants.dist1 is None:
        raise MetadataError("ledger needs the oracle solution and the starting point")
    return SummabilityLedger(constants, constants.dist1 ** 2, np.array(meta.forward))


def check_summability(trace, meta, constants) -> Certificate:
    led = new_ledger(meta, constants)
    for r in _steps(trace):
        led.update(r)
    allv = np.concatenate([np.asarray(v, dtype=float) for v in led.history.values()]) \
        if led.k else np.zeros(0)
    return _cert("summability", allv, **{f"cap_{k}": v for k, v in led.worst().items()})


def check_bounds(trace, meta, constants) -> Certificate:
    """Every graph point stays inside the balls of radius ``Bx`` and ``By``."""
    constants.require("Bx", "By")
    vx = [float(np.max(np.linalg.norm(r.x, axis=1))) - constants.Bx for r in trace]
    vy = [float(np.max(np.linalg.norm(r.y, axis=1))) - constants.By for r in trace]
    return _cert("bounds", np.concatenate([vx, vy]),
                 Bx=constants.Bx, By=constants.By,
                 max_x=max(vx, default=-np.inf) + constants.Bx,
                 max_y=max(vy, default=-np.inf) + constants.By)


def ergodic_averages(trace, k: Optional[int] = None):
    """Step-weighted averages of the graph points over the first ``k`` steps.

    Returns ``(xbar, xmean)``: ``xbar[i] = sum_t alpha_t x_i^t / sum_t alpha_t``
    and the plain average ``xmean[i] = (1/k) sum_t x_i^t``.
    """
    steps = _steps(trace)
    if not steps:
        raise ConfigurationError("empty trace")
    if k is None:
        k = len(steps)
    steps = steps[:k]
    a = np.array([r.alpha for r in steps])
    if np.any(a <= 0):
        raise ConfigurationError("ergodic averages need positive step lengths")
    X = np.stack([r.x for r in steps])
    return np.tensordot(a, X, axes=1) / a.sum(), X.mean(axis=0)


def _running_averages(steps):
    a = np.array([r.alpha for r in steps])
    X = np.stack([r.x for r in steps])
    num = np.cumsum(a[:, None, None] * X, axis=0)
    return num / np.cumsum(a)[:, None, None], X


def _objective(meta):
    if meta.objectives is None or meta.f_star is None:
        raise MetadataError("objective functions and optimal value required")
    return meta.objectives, float(meta.f_star)


def check_ergodic_gap(trace, meta, constants, k: Optional[int] = None) -> Certificate:
    """Function-value gap of the weighted averages and their pairwise spread.

    For every ``t <= k``: ``t * (sum_i f_i(xbar_i^t) - F*) <= E2 R^2 + E3 R``
    and ``max_{i,l} ||xbar_i^t - xbar_l^t|| <= 4 R / (alpha_lb t)``.
    """
    fs, fstar = _objective(meta)
    constants.require("E3", "dist1")
    steps = _steps(trace)[:k]
    if not steps:
        return _cert("ergodic_gap", [])
    R = constants.dist1
    C = constants.E2 * R ** 2 + constants.E3 * R
    xbar, _ = _running_averages(steps)
    t = np.arange(1, len(steps) + 1)
    gaps = np.array([sum(f(xb[i]) for i, f in enumerate(fs)) - fstar for xb in xbar])
    spread = np.zeros(len(steps))
    n = meta.n
    for i in range(n):
        for l in range(i + 1, n):
            spread = np.maximum(spread, np.linalg.norm(xbar[:, i] - xbar[:, l], axis=1))
    v_gap = t * gaps - C
    v_cons = t * spread - 4 * R / constants.alpha_lb
    return _cert("ergodic_gap", np.concatenate([v_gap, v_cons]),
                 bound=C, worst_scaled_gap=float(np.max(t * gaps)),
                 final_gap=float(gaps[-1]), consensus=float(v_cons.max()))


def check_ergodic_gap_single(trace, meta, constants, k: Optional[int] = None) -> Certificate:
    """``t * (sum_i f_i(xbar_j^t) - F*) <= E2 R^2 + E4 R`` at the designated index ``j``."""
    fs, fstar = _objective(meta)
    j, _ = meta.designated_index()
    constants.require("E4", "dist1")
    steps = _steps(trace)[:k]
    if not steps:
        return _cert("ergodic_gap_single", [])
    R = constants.dist1
    C = constants.E2 * R ** 2 + constants.E4 * R
    xbar, _ = _running_averages(steps)
    t = np.arange(1, len(steps) + 1)
    gaps = np.array([sum(f(xb[j]) for f in fs) - fstar for xb in xbar])
    return _cert("ergodic_gap_single", t * gaps - C, index=j + 1, bound=C,
                 final_gap=float(gaps[-1]))


def check_strong_rate(trace, meta, constants, k: Optional[int] = None) -> Certificate:
    """Strong-monotonicity certificates at the strongly monotone index ``l``.

    Per step: ``mu ||z* - x_l||^2 <= phi(p) - phi(p*)``.
    Ergodic: ``||mean_t x_l^t - z*||^2 <= (1 + tau)/2 * xi1 R^2 / (beta xi2 mu t)``,
    which is the stated bound whenever ``beta = 1``.
    """
    if not meta.strong_monotonicity > 0:
        raise MetadataError("metadata required: strong monotonicity modulus")
    constants.require("dist1", "strong_rate_factor")
    ps = _p_star(meta, constants)
    l = meta.strong_index
    mu = constants.mu
    steps = _steps(trace)[:k]
    if not steps:
        return _cert("strong_rate", [])
    zs = ps.z
    v_sep = [mu * float(np.sum((zs - r.x[l]) ** 2)) - (r.phi - _phi_at(r, ps)) for r in steps]
    Xl = np.stack([r.x[l] for r in steps])
    t = np.arange(1, len(steps) + 1)
    xavg = np.cumsum(Xl, axis=0) / t[:, None]
    dist = np.sum((xavg - zs) ** 2, axis=1)
    bound = constants.strong_rate_factor * constants.dist1 ** 2 / t
    v_rate = dist - bound
    return _cert("strong_rate", np.concatenate([v_sep, v_rate]),
                 separation=max(v_sep), rate=float(v_rate.max()),
                 final_dist_sq=float(dist[-1]))


def check_linear_contraction(trace, meta, constants) -> Certificate:
    """``||p+ - p*||^2 <= (1 - c E5) ||p - p*||^2`` with ``c = min beta(2 - beta)`` (1 when beta = 1).

    Also fails when ``E5`` falls outside ``(0, 1/4]``.
    """
    if constants.E5 is None:
        raise MetadataError("metadata required: cocoercivity of operators 1..n-1 and strong monotonicity")
    ps = _p_star(meta, constants)
    q = 1 - constants.contraction_weight * constants.E5
    v = [_sqdist(r.p_after, ps) - q * _sqdist(r.p_before, ps) for r in _steps(trace)]
    member = 0 < constants.E5 <= 0.25
    if not member:
        v.append(np.inf)
    return _cert("linear_contraction", v, E5=constants.E5, factor=q)


_CHECKS = {
    "fejer": check_fejer,
    "separation": check_separation,
    "phi_lb": check_phi_lb,
    "grad_ub": check_grad_ub,
    "alpha_lb": check_alpha_lb,
    "summability": check_summability,
    "bounds": check_bounds,
    "ergodic_gap": check_ergodic_gap,
    "ergodic_gap_single": check_ergodic_gap_single,
    "strong_rate": check_strong_rate,
    "linear_contraction": check_linear_contraction,
}


def certify(trace, meta, constants, names: Sequence[str] = CERTIFICATE_NAMES) -> dict:
    """Run the named certificates; returns ``{name: Certificate}``."""
    out = {}
    for name in names:
        if name not in _CHECKS:
            raise ConfigurationError(f"unknown certificate {name!r}")
        out[name] = _CHECKS[name](trace, meta, constants)
    return out


def certificate_requirements(meta: ProblemMeta, name: str) -> Optional[str]:
    """Why ``name`` cannot run on ``meta`` (``None`` if it can)."""
    if name not in _CHECKS:
        return f"unknown certificate {name!r}"
    if name in ("fejer", "separation", "summability", "bounds", "strong_rate",
                "linear_contraction", "ergodic_gap", "ergodic_gap_single") and not meta.has_oracle:
        return f"{name}: metadata required (oracle solution)"
    if name in ("ergodic_gap", "ergodic_gap_single") and (meta.objectives is None or meta.f_star is None):
        return f"{name}: metadata required (objective functions and optimal value)"
    if name == "ergodic_gap_single":
        try:
            meta.designated_index()
        except ConfigurationError as exc:
            return f"{name}: {exc}"
    if name == "strong_rate" and not meta.strong_monotonicity > 0:
        return "strong_rate: metadata required (strong monotonicity modulus)"
    if name == "linear_contraction":
        if not meta.strong_monotonicity > 0:
            return "linear_contraction: metadata required (strong monotonicity modulus)"
        if any(meta.cocoercivity[i] is None for i in range(meta.n - 1)):
            return "linear_contraction: metadata required (cocoercivity of operators 1..n-1)"
    return None

"""Seeded problem instances with independent oracles.

Each generator is a pure function of its parameters and seed and returns a
:class:`ProblemInstance` whose metadata carries an oracle point
``p* = (z*, w*)`` of the extended solution set, computed without projective
splitting (direct linear solves, a proximal-gradient reference run, or
construction from a chosen solution).

Random matrices are built from seeded orthogonal factors and prescribed
spectra, so Lipschitz, cocoercivity and strong monotonicity constants are
exact by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .operators import (
    OperatorSlot,
    make_affine,
    make_box_indicator,
    make_quadratic_gradient,
    make_soft_threshold,
)
from .rates import ProblemMeta
from .space import ProductPoint, zero_point

__all__ = [
    "GENERATORS",
    "ProblemInstance",
    "build",
    "lasso_reference",
    "make_affine_inclusion",
    "make_cocoercive_strong",
    "make_lasso",
    "make_n1_quadratic",
    "make_random_inclusion",
    "make_strongly_monotone_affine",
    "make_two_set_feasibility",
    "oracle_residual",
]


@dataclass(eq=False)
class ProblemInstance:
    """Operators plus metadata and oracle; ``start`` is the zero point unless given."""

    slots: list
    meta: ProblemMeta
    seed: int
    description: str
    generator: str = ""
    params: dict = field(default_factory=dict)
    start: Optional[ProductPoint] = None

    def __post_init__(self):
        if self.start is None:
            self.start = zero_point(self.n, self.d)

    @property
    def n(self) -> int:
        return len(self.slots)

    @property
    def d(self) -> int:
        if self.meta.z_star is not None:
            return self.meta.z_star.size
        return int(self.params["d"])

    def to_dict(self) -> dict:
        m = self.meta
        return {
            "generator": self.generator,
            "params": dict(self.params),
            "seed": self.seed,
            "description": self.description,
            "meta": {
                "n": m.n,
                "forward": list(m.forward),
                "lipschitz": m.lipschitz,
                "cocoercivity": m.cocoercivity,
                "function_lipschitz": m.function_lipschitz,
                "strong_monotonicity": m.strong_monotonicity,
                "strong_index": None if m.strong_index is None else m.strong_index + 1,
                "rate_E4_applicable": m.rate_E4_applicable,
            },
            "oracle": None if m.z_star is None else {
                "z_star": m.z_star.tolist(),
                "w_star": m.w_star.tolist(),
                "f_star": m.f_star,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProblemInstance":
        """Rebuild from ``to_dict`` output by re-running the generator."""
        return build(doc["generator"], doc.get("params", {}), doc["seed"])


def oracle_residual(inst: ProblemInstance) -> float:
    """Largest violation of ``w_i* in T_i z*`` over all ``n`` operators.

    Forward operators are measured by ``||T z* - w||``; backward operators by
    the resolvent identity ``||prox(z* + w) - z*||`` at unit stepsize.
    """
    m = inst.meta
    z = m.z_star
    ws = list(m.w_star) + [-m.w_star.sum(axis=0) if m.n > 1 else np.zeros_like(z)]
    worst = 0.0
    for s, w in zip(inst.slots, ws):
        if s.is_forward:
            r = np.linalg.norm(s.op.apply(z) - w)
        else:
            r = np.linalg.norm(s.op.prox(z + w, 1.0) - z)
        worst = max(worst, float(r))
    return worst


# ---------------------------------------------------------------------------
# random building blocks
# ---------------------------------------------------------------------------

def _orthogonal(d, rng):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def _sym_from_spectrum(eigs, rng):
    Q = _orthogonal(len(eigs), rng)
    S = (Q * eigs) @ Q.T
    return 0.5 * (S + S.T)


def _skew(d, rng, scale):
    K = rng.standard_normal((d, d))
    K = K - K.T
    nrm = np.linalg.norm(K, 2)
    return K * (scale / nrm) if nrm > 0 else K


def _monotone_matrix(d, rng, lo, hi, skew=0.0):
    """Symmetric part with spectrum spread over ``[lo, hi]`` plus a skew part of norm ``skew``."""
    eigs = np.linspace(lo, hi, d) if d > 1 else np.array([hi])
    S = _sym_from_spectrum(rng.permutation(eigs), rng)
    return S + _skew(d, rng, skew) if skew > 0 and d > 1 else S


def _meta(slots, **kw):
    return ProblemMeta.from_slots(slots, **kw)


def _slots(ops):
    return [OperatorSlot(i, op) for i, op in enumerate(ops)]


# ---------------------------------------------------------------------------
# lasso
# ---------------------------------------------------------------------------

def _lasso_objective(A, b, lam, z):
    r = A @ z - b
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(z)))


def _lasso_gap(A, b, lam, z):
    r = b - A @ z
    g = np.max(np.abs(A.T @ r)) if A.size else 0.0
    theta = r * min(1.0, lam / g) if g > 0 else r
    dual = 0.5 * float(b @ b) - 0.5 * float((b - theta) @ (b - theta))
    return _lasso_objective(A, b, lam, z) - dual


def lasso_reference(A, b, lam, *, max_iters: int = 1_000_000, gap_tol: float = 1e-12):
    """Proximal-gradient reference solution of ``min 1/2||Az - b||^2 + lam ||z||_1``.

    Runs ``z <- soft(z - A'(Az - b)/L, lam/L)`` until the duality gap is below
    ``gap_tol`` (or ``max_iters``), then polishes on the detected support by
    solving the reduced optimality system and keeps the polish only if it is
    sign-consistent and no worse.  Returns ``(z, F, gap, iterations)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    L = float(np.linalg.norm(A, 2) ** 2)
    d = A.shape[1]
    z = np.zeros(d)
    if L == 0:
        return z, 0.5 * float(b @ b), 0.0, 0
    AtA, Atb = A.T @ A, A.T @ b
    t = 1.0 / L
    it = 0
    gap = _lasso_gap(A, b, lam, z)
    while gap > gap_tol and it < max_iters:
        a = z - t * (AtA @ z - Atb)
        z = np.sign(a) * np.maximum(np.abs(a) - t * lam, 0.0)
        it += 1
        if it % 25 == 0:
            gap = _lasso_gap(A, b, lam, z)
    gap = _lasso_gap(A, b, lam, z)

    supp = np.flatnonzero(z)
    if supp.size:
        s = np.sign(z[supp])
        As = A[:, supp]
        try:
            zs = np.linalg.solve(As.T @ As, As.T @ b - lam * s)
        except np.linalg.LinAlgError:
            zs = None
        if zs is not None and np.all(np.sign(zs) == s):
            zp = np.zeros(d)
            zp[supp] = zs
            corr = np.abs(A.T @ (b - A @ zp))
            off = np.setdiff1d(np.arange(d), supp)
            if (not off.size or corr[off].max() <= lam * (1 + 1e-12)) and \
                    _lasso_objective(A, b, lam, zp) <= _lasso_objective(A, b, lam, z) + 1e-15:
                z = zp
                gap = _lasso_gap(A, b, lam, z)
    return z, _lasso_objective(A, b, lam, z), gap, it


def make_lasso(d: int = 50, m: Optional[int] = None, lam: Optional[float] = None, seed: int = 0,
               A=None, b=None) -> ProblemInstance:
    """``min lam ||z||_1 + 1/2 ||Az - b||^2`` as ``T1 = d(lam||.||_1)`` (backward), ``T2 = grad`` (forward).

    Without ``A``, ``A`` is ``m x d`` with singular values spread over
    ``[0.3, 1]`` and ``b`` has unit norm; ``lam`` defaults to
    ``0.1 ||A'b||_inf``.
    """
    rng = np.random.default_rng(seed)
    if A is None:
        m = int(m if m is not None else max(d + d // 2, 1))
        if d < 1 or m < 1:
            raise ConfigurationError("lasso needs d, m >= 1")
        k = min(m, d)
        sv = np.linspace(0.3, 1.0, k) if k > 1 else np.array([1.0])
        U = _orthogonal(m, rng)[:, :k]
        V = _orthogonal(d, rng)[:, :k]
        A = (U * sv) @ V.T
        ztrue = np.zeros(d)
        nz = rng.choice(d, size=max(1, d // 5), replace=False)
        ztrue[nz] = rng.standard_normal(nz.size)
        b = A @ ztrue + 0.1 * rng.standard_normal(m)
        b = b / np.linalg.norm(b)
    else:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        m, d = A.shape
    if lam is None:
        lam = 0.1 * float(np.max(np.abs(A.T @ b)))
    if not lam > 0:
        raise ConfigurationError("lasso needs lambda > 0")
    lam = float(lam)

    z_star, f_star, gap, _ = lasso_reference(A, b, lam)
    f1 = make_soft_threshold(lam, d)
    f2 = make_quadratic_gradient(A.T @ A, -(A.T @ b), 0.5 * float(b @ b))
    w1 = A.T @ (b - A @ z_star)
    slots = _slots([f1, f2])
    meta = _meta(slots, z_star=z_star, w_star=w1[None, :], f_star=f_star)
    return ProblemInstance(slots, meta, seed, f"lasso d={d} m={m} lambda={lam:.6g} (ref gap {gap:.1e})",
                           "lasso", {"d": d, "m": m, "lam": lam})


# ---------------------------------------------------------------------------
# affine inclusions
# ---------------------------------------------------------------------------

def _affine_oracle(As, bs):
    M = sum(As)
    z = -np.linalg.solve(M, sum(bs))
    return z


def _scale_offsets(As, bs):
    """Rescale the offsets so that the solution has unit norm."""
    z = _affine_oracle(As, bs)
    nz = np.linalg.norm(z)
    if nz > 0:
        bs = [b / nz for b in bs]
        z = _affine_oracle(As, bs)
    return bs, z


def _affine_instance(As, bs, backward, seed, desc, gen, params):
    ops = [make_affine(A, b, backward=bk) for A, b, bk in zip(As, bs, backward)]
    slots = _slots(ops)
    z = _affine_oracle(As, bs)
    w = np.array([A @ z + b for A, b in zip(As[:-1], bs[:-1])]).reshape(len(As) - 1, z.size)
    fstar = None
    if all(op.value is not None for op in ops):
        fstar = float(sum(op.value(z) for op in ops))
    meta = _meta(slots, z_star=z, w_star=w, f_star=fstar)
    return ProblemInstance(slots, meta, seed, desc, gen, params)


def make_affine_inclusion(As, bs, backward: Optional[Sequence[bool]] = None,
                          seed: int = 0) -> ProblemInstance:
    """Inclusion ``0 in sum_i (A_i z + b_i)`` from explicit matrices; forward slots unless ``backward``."""
    As = [np.atleast_2d(np.asarray(A, dtype=float)) for A in As]
    bs = [np.atleast_1d(np.asarray(b, dtype=float)) for b in bs]
    if len(As) != len(bs) or not As:
        raise ConfigurationError("need one offset per matrix")
    backward = [False] * len(As) if backward is None else list(backward)
    return _affine_instance(As, bs, backward, seed, f"affine inclusion n={len(As)}",
                            "affine_inclusion", {"As": [A.tolist() for A in As],
                                                 "bs": [b.tolist() for b in bs],
                                                 "backward": backward})


def make_strongly_monotone_affine(d: int = 50, n: int = 2, mu: float = 0.5, seed: int = 0,
                                  backward: Optional[Sequence[bool]] = None) -> ProblemInstance:
    """``T_i z = A_i z + b_i`` with monotone ``A_i`` and ``mu``-strong monotonicity in the last slot.

    Each symmetric part has spectrum in ``[0, 1]`` (``[mu, 1 + mu]`` for the
    last) and a skew part of norm 0.5.  By default the first operator is
    backward and the rest forward.  ``z*`` comes from a direct solve of
    ``sum_i A_i z = -sum_i b_i``.
    """
    if not mu > 0:
        raise ConfigurationError("strongly monotone instance needs mu > 0")
    if n < 1 or d < 1:
        raise ConfigurationError("need n, d >= 1")
    rng = np.random.default_rng(seed)
    As = [_monotone_matrix(d, rng, 0.0, 1.0, skew=0.5) for _ in range(n - 1)]
    As.append(_monotone_matrix(d, rng, 0.0, 1.0, skew=0.5) + mu * np.eye(d))
    bs = [rng.standard_normal(d) for _ in range(n)]
    bs, _ = _scale_offsets(As, bs)
    if backward is None:
        backward = [i == 0 and n > 1 for i in range(n)]
    return _affine_instance(As, bs, list(backward), seed,
                            f"strongly monotone affine d={d} n={n} mu={mu:g}",
                            "strongly_monotone_affine", {"d": d, "n": n, "mu": mu})


def make_cocoercive_strong(d: int = 20, n: int = 2, mu: float = 0.5, seed: int = 0) -> ProblemInstance:
    """Forward instance for the linear rate: ``T_1..T_{n-1}`` symmetric PSD, ``T_n`` strongly monotone.

    ``T_i`` (``i < n``) has spectrum in ``[0.1, 1]`` so ``Gamma_i = 1``;
    ``T_n`` is symmetric with spectrum ``[mu, 1 + mu]``.  The solution set is
    the singleton ``(z*, T_1 z*, ..., T_{n-1} z*)``.
    """
    if not mu > 0:
        raise ConfigurationError("cocoercive instance needs mu > 0")
    rng = np.random.default_rng(seed)
    As = [_monotone_matrix(d, rng, 0.1, 1.0) for _ in range(n - 1)]
    As.append(_monotone_matrix(d, rng, 0.0, 1.0) + mu * np.eye(d))
    bs = [rng.standard_normal(d) for _ in range(n)]
    bs, _ = _scale_offsets(As, bs)
    return _affine_instance(As, bs, [False] * n, seed,
                            f"cocoercive + strongly monotone d={d} n={n} mu={mu:g}",
                            "cocoercive_strong", {"d": d, "n": n, "mu": mu})


def make_n1_quadratic(d: int = 1, center: float = 1.0, seed: int = 0) -> ProblemInstance:
    """Single backward operator ``grad 1/2||x - c||^2`` with ``c = center * 1``."""
    c = np.full(d, float(center))
    op = make_affine(np.eye(d), -c, backward=True)
    slots = _slots([op])
    meta = _meta(slots, z_star=c, w_star=np.zeros((0, d)), f_star=float(op.value(c)))
    return ProblemInstance(slots, meta, seed, f"n=1 quadratic d={d}", "n1_quadratic",
                           {"d": d, "center": float(center)})


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

def make_two_set_feasibility(d: int = 10, seed: int = 0, lo1=None, hi1=None, lo2=None,
                             hi2=None) -> ProblemInstance:
    """Find a point in the intersection of two boxes (two backward normal cones).

    Boxes are random overlapping ones unless all four bounds are given.  The
    oracle is the midpoint of the intersection with ``w* = 0``.  Neither
    indicator is Lipschitz, so the single-point ergodic rate is flagged as not
    applicable.
    """
    rng = np.random.default_rng(seed)
    if lo1 is None:
        c1 = rng.uniform(-1, 1, d)
        c2 = c1 + rng.uniform(-0.5, 0.5, d)
        lo1, hi1 = c1 - 0.5, c1 + 0.5
        lo2, hi2 = c2 - 0.5, c2 + 0.5
    lo1, hi1, lo2, hi2 = (np.broadcast_to(np.asarray(v, dtype=float), (d,)).copy()
                          for v in (lo1, hi1, lo2, hi2))
    lo, hi = np.maximum(lo1, lo2), np.minimum(hi1, hi2)
    if np.any(lo > hi):
        raise ConfigurationError("two-set feasibility: the boxes do not intersect")
    slots = _slots([make_box_indicator(lo1, hi1), make_box_indicator(lo2, hi2)])
    meta = _meta(slots, z_star=0.5 * (lo + hi), w_star=np.zeros((1, d)), f_star=0.0,
                 rate_E4_applicable=False)
    return ProblemInstance(slots, meta, seed, f"two-box feasibility d={d}", "two_set_feasibility",
                           {"d": d, "lo1": lo1.tolist(), "hi1": hi1.tolist(),
                            "lo2": lo2.tolist(), "hi2": hi2.tolist()})


# ---------------------------------------------------------------------------
# random mixed inclusions
# ---------------------------------------------------------------------------

KINDS = ("l1", "box", "affine_backward", "affine_forward")


def make_random_inclusion(d: int = 10, n: int = 3, seed: int = 0,
                          kinds: Optional[Sequence[str]] = None) -> ProblemInstance:
    """Mixed backward/forward inclusion built around a chosen solution.

    A solution ``z*`` and dual blocks ``w_i* in T_i z*`` are drawn first; the
    last operator is affine and its offset is set so that
    ``-sum_{i<n} w_i* = T_n z*``.  ``kinds`` lists one of ``l1``, ``box``,
    ``affine_backward``, ``affine_forward`` per operator (the last must be
    affine); by default kinds are drawn at random.
    """
    rng = np.random.default_rng(seed)
    # drawn unconditionally so explicit kinds leave the random stream unchanged
    drawn = [str(rng.choice(KINDS)) for _ in range(n - 1)]
    drawn.append(str(rng.choice(KINDS[2:])))
    kinds = drawn if kinds is None else list(kinds)
    if len(kinds) != n:
        raise ConfigurationError(f"kinds has {len(kinds)} entries for n={n}")
    for k in kinds:
        if k not in KINDS:
            raise ConfigurationError(f"unknown operator kind {k!r}")
    if not kinds[-1].startswith("affine"):
        raise ConfigurationError("the last operator of a random inclusion must be affine")

    z = rng.standard_normal(d) / np.sqrt(d)
    z[rng.random(d) < 0.3] = 0.0
    ops, ws = [], []
    for k in kinds[:-1]:
        if k == "l1":
            lam = float(rng.uniform(0.05, 0.3))
            w = np.where(z != 0, lam * np.sign(z), rng.uniform(-lam, lam, d))
            ops.append(make_soft_threshold(lam, d))
        elif k == "box":
            lo = z - rng.uniform(0.1, 1.0, d)
            hi = z + rng.uniform(0.1, 1.0, d)
            side = rng.integers(0, 3, d)
            g = rng.uniform(0.0, 0.3, d)
            lo = np.where(side == 1, z, lo)
            hi = np.where(side == 2, z, hi)
            w = np.where(side == 1, -g, np.where(side == 2, g, 0.0))
            ops.append(make_box_indicator(lo, hi))
        else:
            A = _monotone_matrix(d, rng, 0.0, 1.0, skew=0.3)
            b = rng.standard_normal(d) * 0.3
            ops.append(make_affine(A, b, backward=(k == "affine_backward")))
            w = A @ z + b
        ws.append(w)
    A = _monotone_matrix(d, rng, 0.0, 1.0, skew=0.3)
    target = -np.sum(ws, axis=0) if ws else np.zeros(d)
    ops.append(make_affine(A, target - A @ z, backward=(kinds[-1] == "affine_backward")))
    slots = _slots(ops)
    meta = _meta(slots, z_star=z, w_star=np.array(ws).reshape(n - 1, d))
    return ProblemInstance(slots, meta, seed, f"random inclusion d={d} n={n} kinds={','.join(kinds)}",
                           "random_inclusion", {"d": d, "n": n, "kinds": kinds})


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

GENERATORS: dict[str, Callable[..., ProblemInstance]] = {
    "lasso": make_lasso,
    "strongly_monotone_affine": make_strongly_monotone_affine,
    "cocoercive_strong": make_cocoercive_strong,
    "two_set_feasibility": make_two_set_feasibility,
    "random_inclusion": make_random_inclusion,
    "n1_quadratic": make_n1_quadratic,
    "affine_inclusion": make_affine_inclusion,
}


def build(generator: str, params: dict, seed: int) -> ProblemInstance:
    """Instantiate a registered generator; unknown names or parameters raise ConfigurationError."""
    try:
        fn = GENERATORS[generator]
    except KeyError:
        raise ConfigurationError(
            f"unknown generator {generator!r}; expected one of {sorted(GENERATORS)}") from None
    try:
        return fn(seed=int(seed), **params)
    except TypeError as exc:
        raise ConfigurationError(f"generator {generator!r}: {exc}") from None

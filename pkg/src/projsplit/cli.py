"""Command-line driver: ``projsplit {solve, verify, equiv}``.

Exit codes: 0 success, 1 a requested certificate failed, 2 the spec or
parameters were rejected, 3 a runtime error occurred while solving.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import problems, rates
from .errors import ConfigurationError, ProjSplitError
from .operators import BackwardOperator, OperatorSlot, make_affine, make_scaled_identity
from .solver import (
    SolverConfig,
    n1_extragradient_reference,
    n1_proximal_point_reference,
    solve,
)
from .space import ProductPoint

__all__ = ["ProblemSpec", "SpecError", "main", "parse_spec", "serialize_spec"]

EXIT_OK, EXIT_CERT, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3

SPEC_FIELDS = ("name", "generator", "params", "seed", "config", "certificates")
CONFIG_FIELDS = ("gamma", "beta", "rho", "sigma", "delta", "max_iters", "pi_tolerance",
                 "error_mode", "error_seed")
TRACE_COLUMNS = ("k", "phi", "pi", "alpha", "norm_grad_gamma", "dist_p_to_pstar_gamma",
                 "dist_z_to_zstar", "F_gap", "fejer_residual")
EQUIV_TOL = 1e-12


class SpecError(ConfigurationError):
    """Spec rejected at parse time; ``where`` is ``line:col`` when known."""

    def __init__(self, msg, path="$", where=None):
        self.path = path
        self.where = where
        loc = f"{path}" + (f" (line {where[0]}, col {where[1]})" if where else "")
        super().__init__(f"{loc}: {msg}")


@dataclass
class ProblemSpec:
    name: str
    generator: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    config: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "generator": self.generator,
            "params": self.params,
            "seed": self.seed,
            "config": self.config,
            "certificates": list(self.certificates),
        }

    def solver_config(self, **over) -> SolverConfig:
        kw = dict(self.config)
        rho = kw.get("rho")
        if isinstance(rho, list):
            kw["rho"] = tuple(rho)
        kw.update(over)
        return SolverConfig(**kw)

    def instance(self, seed: Optional[int] = None):
        return problems.build(self.generator, self.params, self.seed if seed is None else seed)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _position(text: str, offset: int):
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _locate(text: Optional[str], key: str, value=None, nth: int = 0):
    """Best-effort ``(line, col)`` of ``"key"`` (or of the ``nth`` ``value`` string after it)."""
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    if not m:
        return None
    pos = m.start()
    if value is not None:
        needle = json.dumps(value)
        start = m.end()
        for _ in range(nth + 1):
            hit = text.find(needle, start)
            if hit < 0:
                return _position(text, pos)
            pos, start = hit, hit + len(needle)
    return _position(text, pos)


def _num(v, path, text, key, *, integer=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
        kind = "an integer" if integer else "a number"
        raise SpecError(f"expected {kind}, got {json.dumps(v)}", path, _locate(text, key))
    return v


def parse_spec(source, text: Optional[str] = None) -> ProblemSpec:
    """Validate a spec given as JSON text or an already-decoded dict.

    Unknown fields, generators and certificate names are rejected with the
    JSON path and, when text is available, the line and column.
    """
    if isinstance(source, (str, bytes)):
        text = source if isinstance(source, str) else source.decode()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc.msg}", "$", (exc.lineno, exc.colno)) from None
    else:
        doc = source
    if not isinstance(doc, dict):
        raise SpecError("top level must be an object")
    for k in doc:
        if k not in SPEC_FIELDS:
            raise SpecError(f"unknown field {k!r}; expected {list(SPEC_FIELDS)}", f"$.{k}",
                            _locate(text, k))
    for k in ("name", "generator"):
        if k not in doc:
            raise SpecError(f"missing required field {k!r}")
        if not isinstance(doc[k], str):
            raise SpecError("expected a string", f"$.{k}", _locate(text, k))
    gen = doc["generator"]
    if gen not in problems.GENERATORS:
        raise SpecError(f"unknown generator {gen!r}; expected one of {sorted(problems.GENERATORS)}",
                        "$.generator", _locate(text, "generator", gen))
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise SpecError("expected an object", "$.params", _locate(text, "params"))
    seed = _num(doc.get("seed", 0), "$.seed", text, "seed", integer=True)

    config = doc.get("config", {})
    if not isinstance(config, dict):
        raise SpecError("expected an object", "$.config", _locate(text, "config"))
    for k, v in config.items():
        path = f"$.config.{k}"
        if k not in CONFIG_FIELDS:
            raise SpecError(f"unknown config field {k!r}; expected {list(CONFIG_FIELDS)}", path,
                            _locate(text, k))
        if k == "rho":
            if isinstance(v, list):
                for i, r in enumerate(v):
                    _num(r, f"{path}[{i}]", text, k, allow_none=True)
            else:
                _num(v, path, text, k, allow_none=True)
        elif k == "error_mode":
            if v not in ("none", "scaled-random", "adversarial-aligned"):
                raise SpecError(f"unknown error mode {v!r}", path, _locate(text, k, v))
        else:
            _num(v, path, text, k, integer=k in ("max_iters", "error_seed"))

    certs = doc.get("certificates", [])
    if not isinstance(certs, list):
        raise SpecError("expected a list", "$.certificates", _locate(text, "certificates"))
    seen = {}
    for i, c in enumerate(certs):
        if c not in rates.CERTIFICATE_NAMES:
            nth = seen.get(json.dumps(c), 0)
            raise SpecError(f"unknown certificate {c!r}; expected one of {list(rates.CERTIFICATE_NAMES)}",
                            f"$.certificates[{i}]", _locate(text, "certificates", c, nth)
                            if isinstance(c, str) else None)
        seen[json.dumps(c)] = seen.get(json.dumps(c), 0) + 1
    return ProblemSpec(doc["name"], gen, params, seed, config, list(certs))


def serialize_spec(spec: ProblemSpec) -> str:
    return json.dumps(spec.to_dict(), indent=2, sort_keys=False)


def load_spec(path) -> ProblemSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}") from None
    return parse_spec(text)


# ---------------------------------------------------------------------------
# shared setup
# ---------------------------------------------------------------------------

def _seed(spec: ProblemSpec) -> int:
    env = os.environ.get("PROJSPLIT_SEED")
    if env is None or env == "":
        return spec.seed
    try:
        return int(env)
    except ValueError:
        raise SpecError(f"PROJSPLIT_SEED must be an integer, got {env!r}") from None


def _prepare(spec: ProblemSpec):
    """Instance, config and constants; everything here maps to exit code 2."""
    inst = spec.instance(_seed(spec))
    config = spec.solver_config()
    config.stepsizes(inst.slots)
    for name in spec.certificates:
        why = rates.certificate_requirements(inst.meta, name)
        if why is not None:
            raise ConfigurationError(why)
    need = set()
    for name in spec.certificates:
        need |= {"bounds": {"Bx", "By"}, "ergodic_gap": {"E3"}, "ergodic_gap_single": {"E4"},
                 "linear_contraction": {"E5"}}.get(name, set())
    const = rates.compute_constants(inst.meta, config, inst.start, require=sorted(need))
    return inst, config, const


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return format(float(v), ".17g")


def _pretty(v) -> str:
    if v is None:
        return "n/a"
    s = format(float(v), ".17g")
    fr = Fraction(float(v)).limit_denominator(100)
    if 1 < fr.denominator and abs(fr.numerator) < 1000 and abs(float(fr) - v) <= 1e-15 * max(1.0, abs(v)):
        s += f" ({fr})"
    return s


def _err(msg, quiet=False):
    print(f"error: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

def trace_rows(trace, inst, const, ledger_keys=()):
    """Per-iteration CSV rows (as strings) for a complete trace."""
    meta = inst.meta
    ps = meta.p_star(const.gamma) if meta.has_oracle else None
    fs = meta.objectives if (meta.objectives is not None and meta.f_star is not None) else None
    led = rates.new_ledger(meta, const) if ledger_keys else None
    num = None
    asum = 0.0
    rows = []
    for r in trace:
        dist_p = dist_z = fej = gap = None
        if ps is not None:
            dz = r.p_before.z - ps.z
            dist_z = float(np.linalg.norm(dz))
            d_before = const.gamma * float(dz @ dz) + float(np.sum((r.p_before.w - ps.w) ** 2))
            dist_p = float(np.sqrt(d_before))
            if not r.terminal:
                dza = r.p_after.z - ps.z
                d_after = const.gamma * float(dza @ dza) + float(np.sum((r.p_after.w - ps.w) ** 2))
                step = r.p_after - r.p_before
                step_sq = const.gamma * float(step.z @ step.z) + float(np.sum(step.w ** 2))
                fej = d_after - d_before + r.beta * (2 - r.beta) * step_sq
        if not r.terminal:
            num = r.alpha * r.x if num is None else num + r.alpha * r.x
            asum += r.alpha
            if fs is not None:
                xbar = num / asum
                gap = sum(f(xbar[i]) for i, f in enumerate(fs)) - meta.f_star
        row = [str(r.k), _fmt(r.phi), _fmt(r.pi), _fmt(r.alpha), _fmt(np.sqrt(r.pi)),
               _fmt(dist_p), _fmt(dist_z), _fmt(gap), _fmt(fej)]
        if led is not None:
            led.update(r)
            res = {k: led.history[k][-1] for k in ledger_keys} if (led.k == r.k and not r.terminal) else {}
            row += [_fmt(res.get(k)) for k in ledger_keys]
        rows.append(row)
    return rows


def write_trace(path, trace, inst, const, stride=1, ledger=False):
    keys = rates.SummabilityLedger.KEYS if ledger else ()
    rows = trace_rows(trace, inst, const, keys)
    if stride > 1 and rows:
        keep = [row for row, r in zip(rows, trace) if (r.k - 1) % stride == 0]
        if keep[-1] is not rows[-1]:
            keep.append(rows[-1])
        rows = keep
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(TRACE_COLUMNS) + [f"cap_{k}" for k in keys])
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_solve(spec_path, out_dir=".", stride=1, quiet=False) -> int:
    try:
        spec = load_spec(spec_path)
        inst, config, const = _prepare(spec)
    except (ProjSplitError, ValueError) as exc:
        _err(exc)
        return EXIT_PARSE
    try:
        outcome = solve(inst, config)
        certs = rates.certify(outcome.trace, inst.meta, const, spec.certificates)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(out / "trace.csv", outcome.trace, inst, const, stride,
                    ledger="summability" in spec.certificates)
        report = {
            "name": spec.name,
            "generator": spec.generator,
            "seed": _seed(spec),
            "description": inst.description,
            "status": outcome.status.value,
            "iterations": outcome.iterations,
            "final_dist_z": None if not inst.meta.has_oracle else
            float(np.linalg.norm(outcome.point.z - inst.meta.z_star)),
            "constants": {k: (None if v is None else float(v)) for k, v in const.table().items()},
            "certificates": {k: c.to_dict() for k, c in certs.items()},
        }
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    except (ProjSplitError, FloatingPointError, np.linalg.LinAlgError, OSError) as exc:
        _err(exc)
        return EXIT_RUNTIME
    ok = all(c.verdict for c in certs.values())
    if not quiet:
        print(f"{spec.name}: {inst.description}")
        print(f"status {outcome.status.value} after {outcome.iterations} iterations")
        for k, c in certs.items():
            print(f"  {k:20s} {'pass' if c.verdict else 'FAIL'}  worst residual {c.residual:.3e}"
                  f" (tol {c.tolerance:g})")
    return EXIT_OK if ok else EXIT_CERT


def cmd_verify(spec_path, quiet=False) -> int:
    try:
        spec = load_spec(spec_path)
        inst, config, const = _prepare(spec)
    except (ProjSplitError, ValueError) as exc:
        _err(exc)
        return EXIT_PARSE
    labels = {"xi1": "xi1", "xi2": "xi2", "tau": "tau", "alpha_lb": "alpha_lb", "E1": "E1",
              "E2": "E2", "E3": "E3", "E4": "E4", "E5": "E5", "Bx": "B_x", "By": "B_y"}
    print(f"{spec.name}: {inst.description}")
    for k, v in const.table().items():
        print(f"  {labels[k]:9s} = {_pretty(v)}")
    if const.E5 is not None:
        print(f"  E5 in (0, 1/4]: {'yes' if 0 < const.E5 <= 0.25 else 'NO'}")
    return EXIT_OK


def _equiv_prox_point(args):
    d = args.d
    c = np.full(d, args.center)
    rng = np.random.default_rng(args.seed)
    if args.rho_range is not None:
        lo, hi = args.rho_range
        rhos = rng.uniform(lo, hi, args.steps)
    else:
        lo = hi = args.rho if args.rho is not None else 1.0
        rhos = np.full(args.steps, lo)

    def prox(a, rho):
        return (a + rho * c) / (1.0 + rho)

    op = BackwardOperator(prox=prox, name="quadratic")
    config = SolverConfig(beta=args.beta, rho=lambda i, k: float(rhos[k - 1]),
                          rho_bounds=([lo], [hi]), max_iters=args.steps, pi_tolerance=0.0)
    z1 = np.full(d, args.z1)
    ref = n1_proximal_point_reference(prox, lambda t: float(rhos[t - 1]), args.beta, z1, args.steps)
    return [OperatorSlot(0, op)], config, z1, ref


def _equiv_extragradient(args):
    d = args.d
    if args.operator == "scaled-identity":
        op = make_scaled_identity(args.scale)
    else:
        rng = np.random.default_rng(args.seed)
        S = rng.standard_normal((d, d))
        K = rng.standard_normal((d, d))
        A = S @ S.T / d + 0.5 * (K - K.T)
        op = make_affine(A, np.zeros(d))
    rho = args.rho if args.rho is not None else 0.9 / op.lipschitz
    config = SolverConfig(beta=args.beta, rho=rho, max_iters=args.steps, pi_tolerance=0.0)
    config.stepsizes([OperatorSlot(0, op)])
    z1 = np.full(d, args.z1)
    ref = n1_extragradient_reference(op.apply, rho, args.beta, z1, args.steps)
    return [OperatorSlot(0, op)], config, z1, ref


def cmd_equiv(args) -> int:
    try:
        if args.kind == "prox-point":
            slots, config, z1, ref = _equiv_prox_point(args)
        else:
            slots, config, z1, ref = _equiv_extragradient(args)
    except (ProjSplitError, ValueError) as exc:
        _err(exc)
        return EXIT_PARSE
    try:
        out = solve(slots, config, ProductPoint(z1, np.zeros((0, z1.size))))
    except (ProjSplitError, FloatingPointError) as exc:
        _err(exc)
        return EXIT_RUNTIME
    zs = np.array([z1] + [r.p_after.z for r in out.trace])
    m = min(len(zs), len(ref))
    dev = float(np.max(np.abs(zs[:m] - ref[:m]))) if m else 0.0
    if len(zs) != len(ref):
        dev = float("inf")
    if not args.quiet:
        print(f"{args.kind}: {m - 1} steps compared")
        if m > 1:
            print(f"  z^2 = {np.array2string(zs[1], precision=17)}")
        print(f"  max per-step deviation = {dev:.3e}")
    return EXIT_OK if dev <= EQUIV_TOL else EXIT_CERT


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="projsplit", description="Projective splitting solver harness.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a spec, write trace.csv and report.json")
    s.add_argument("spec")
    s.add_argument("--out", default=".", help="output directory")
    s.add_argument("--stride", type=int, default=1, help="keep every stride-th trace row")
    s.add_argument("--quiet", action="store_true")

    v = sub.add_parser("verify", help="print the rate constants of a spec without solving")
    v.add_argument("spec")
    v.add_argument("--quiet", action="store_true")

    e = sub.add_parser("equiv", help="compare n=1 runs against the classical recursions")
    e.add_argument("kind", choices=["prox-point", "extragradient"])
    e.add_argument("--steps", type=int, default=100)
    e.add_argument("--d", type=int, default=1)
    e.add_argument("--z1", type=float, default=None)
    e.add_argument("--rho", type=float, default=None)
    e.add_argument("--rho-range", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    e.add_argument("--beta", type=float, default=1.0)
    e.add_argument("--center", type=float, default=0.0, help="prox-point: minimizer of 1/2||x - c||^2")
    e.add_argument("--operator", choices=["scaled-identity", "affine"], default="scaled-identity")
    e.add_argument("--scale", type=float, default=2.0, help="extragradient: T = scale * I")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if args.command == "solve":
        if args.stride < 1:
            _err("--stride must be >= 1")
            return EXIT_PARSE
        return cmd_solve(args.spec, args.out, args.stride, args.quiet)
    if args.command == "verify":
        return cmd_verify(args.spec, args.quiet)
    if args.z1 is None:
        args.z1 = 2.0 if args.kind == "prox-point" else 1.0
    return cmd_equiv(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Shared fixtures: the randomized instance suite and small independent oracles."""
from __future__ import annotations

import numpy as np

from projsplit import problems, rates, solver
from projsplit.space import ProductPoint

NS = (1, 2, 3, 5)
DS = (1, 10, 50)

HYPERPLANE = ("separation", "phi_lb", "grad_ub", "alpha_lb")


def suite_instance(i: int):
    """Instance ``i`` of the 20-member randomized suite (n, d and operator kinds vary).

    The start is a seeded random point rather than zero so that no instance
    begins at its own solution.
    """
    n, d = NS[i % 4], DS[i % 3]
    rng = np.random.default_rng(100 + i)
    kinds = [str(rng.choice(problems.KINDS)) for _ in range(n - 1)]
    kinds.append(("affine_backward", "affine_forward")[i % 2])
    inst = problems.make_random_inclusion(d, n, seed=100 + i, kinds=kinds)
    inst.start = ProductPoint(rng.standard_normal(d), rng.standard_normal((n - 1, d)) * 0.5)
    return inst


def suite(count: int = 20):
    return [suite_instance(i) for i in range(count)]


def run(inst, config, names):
    out = solver.solve(inst, config)
    const = rates.compute_constants(inst.meta, config, inst.start)
    return out, const, rates.certify(out.trace, inst.meta, const, names)


def transcribe_iteration(ops, z, w, rho, gamma=1.0, beta=1.0):
    """Plain-Python transcription of one projective-splitting iteration (exact activations).

    ``ops`` is a list of ``("b", prox)`` or ``("f", T)``; scalars are handled
    coordinate by coordinate with lists so no package kernel is involved.
    """
    n = len(ops)
    d = len(z)
    wl = [list(wi) for wi in w]
    wl.append([-sum(wl[i][j] for i in range(n - 1)) for j in range(d)])
    xs, ys = [], []
    for i, (kind, f) in enumerate(ops):
        if kind == "b":
            a = [z[j] + rho[i] * wl[i][j] for j in range(d)]
            x = list(f(np.array(a), rho[i]))
            y = [(a[j] - x[j]) / rho[i] for j in range(d)]
        else:
            tz = list(f(np.array(z)))
            x = [z[j] - rho[i] * (tz[j] - wl[i][j]) for j in range(d)]
            y = list(f(np.array(x)))
        xs.append(x)
        ys.append(y)
    u = [[xs[i][j] - xs[n - 1][j] for j in range(d)] for i in range(n - 1)]
    v = [sum(ys[i][j] for i in range(n)) for j in range(d)]
    pi = sum(uij * uij for ui in u for uij in ui) + sum(vj * vj for vj in v) / gamma
    phi = sum(z[j] * v[j] for j in range(d))
    phi += sum(wl[i][j] * u[i][j] for i in range(n - 1) for j in range(d))
    phi -= sum(xs[i][j] * ys[i][j] for i in range(n) for j in range(d))
    alpha = beta * phi / pi
    zn = [z[j] - alpha / gamma * v[j] for j in range(d)]
    wn = [[wl[i][j] - alpha * u[i][j] for j in range(d)] for i in range(n - 1)]
    return dict(x=np.array(xs), y=np.array(ys), phi=phi, pi=pi, alpha=alpha,
                z=np.array(zn), w=np.array(wn).reshape(n - 1, d))

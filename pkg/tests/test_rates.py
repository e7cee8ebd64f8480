from fractions import Fraction as Fr
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import run
from projsplit import problems, rates
from projsplit.errors import ConfigurationError, MetadataError
from projsplit.rates import ProblemMeta, compute_constants, ergodic_averages
from projsplit.solver import SolverConfig, solve
from projsplit.space import ProductPoint


def n1_meta(**kw):
    return ProblemMeta(n=1, forward=[False], lipschitz=[None], cocoercivity=[None],
                       function_lipschitz=[None], **kw)


def exact_constants(n, fwd, L, rho_lo, rho_hi, gamma, sigma, delta, b_lo, b_hi):
    """Rational-arithmetic evaluation of the constant formulas (independent oracle)."""
    F = [i for i in range(n) if fwd[i]]
    B = [i for i in range(n) if not fwd[i]]
    rmin = min(rho_lo)
    rbar = max((rho_hi[i] for i in B), default=Fr(0))
    Lbar = max((L[i] for i in F), default=Fr(0))
    xi1 = 2 * n * (1 + 2 / gamma * (Lbar ** 2 * len(F) + (1 + delta) / rmin ** 2))
    xi2 = min(([(1 - sigma) / rbar] if B else []) + [1 / rho_hi[j] - L[j] for j in F])
    tau = 1 / (b_lo * (2 - b_hi))
    E1 = 2 / (1 - sigma) / rmin * (1 + Lbar / xi2 * (1 + rmin * Lbar)) * xi1 / (b_lo ** 2 * xi2)
    rn = rho_hi[n - 1] if not fwd[n - 1] else Fr(0)
    E2 = xi1 / (2 * b_lo * xi2) * (1 + (3 + 2 * E1) * tau
                                   + rn * tau * (2 + gamma * E1 + gamma * delta * xi1 / (b_lo ** 2 * xi2 ** 2)))
    return dict(xi1=xi1, xi2=xi2, tau=tau, alpha_lb=b_lo * xi2 / xi1, E1=E1, E2=E2)


class TestConstants:
    def test_n1_plugin(self):
        c = compute_constants(n1_meta(), SolverConfig())
        assert c.xi1 == 6 and c.xi2 == 1
        assert c.alpha_lb == pytest.approx(1 / 6, rel=1e-15) and c.tau == 1

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_rational_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        fwd = [bool(rng.integers(0, 2)) for _ in range(n)]
        L = [Fr(int(rng.integers(1, 9)), 4) if f else None for f in fwd]
        rho = [Fr(int(rng.integers(1, 4)), 4) / L[i] if fwd[i] else Fr(int(rng.integers(1, 9)), 4)
               for i in range(n)]
        gamma, sigma, delta = Fr(int(rng.integers(1, 5)), 2), Fr(int(rng.integers(0, 5)), 10), \
            Fr(int(rng.integers(0, 5)), 20)
        beta = Fr(int(rng.integers(2, 7)), 4)
        meta = ProblemMeta(n=n, forward=fwd, lipschitz=[None if x is None else float(x) for x in L],
                           cocoercivity=[None] * n, function_lipschitz=[None] * n)
        cfg = SolverConfig(gamma=float(gamma), sigma=float(sigma), delta=float(delta), beta=float(beta),
                           rho=[float(r) for r in rho])
        got = compute_constants(meta, cfg)
        want = exact_constants(n, fwd, L, rho, rho, gamma, sigma, delta, beta, beta)
        for k, v in want.items():
            assert getattr(got, k) == pytest.approx(float(v), rel=1e-13), k

    def test_empty_forward_set(self):
        c = compute_constants(n1_meta(), SolverConfig(rho=2.0))
        assert c.L_bar == 0 and c.n_forward == 0 and c.xi2 == 0.5

    def test_empty_backward_set(self):
        meta = ProblemMeta(n=1, forward=[True], lipschitz=[2.0], cocoercivity=[2.0], function_lipschitz=[None])
        c = compute_constants(meta, SolverConfig(rho=0.25))
        assert c.rho_bar == 0 and c.rho_bar_last == 0
        assert c.xi2 == pytest.approx(2.0)

    def test_delta_sweep(self):
        prev = None
        for delta in np.linspace(0, 2, 9):
            c = compute_constants(n1_meta(), SolverConfig(delta=float(delta)))
            if prev is not None:
                assert c.xi1 > prev.xi1 and c.alpha_lb < prev.alpha_lb
            prev = c

    def test_forward_stepsize_sweep(self):
        # lasso: one backward slot (rho = 1) and one forward slot; shrinking the forward stepsize
        # moves xi2 from the forward branch to the sigma branch (1 - sigma) / rho = 1
        meta = problems.make_lasso(5, seed=0).meta
        L = meta.lipschitz[1]
        sigma_branch = 1.0
        xi2 = [compute_constants(meta, SolverConfig(rho=[1.0, f / L])).xi2
               for f in (0.99, 0.9, 0.7, 0.5, 0.4, 0.2)]
        assert all(b >= a for a, b in zip(xi2, xi2[1:]))
        assert xi2[0] == pytest.approx(L * (1 / 0.99 - 1))
        assert xi2[-1] == pytest.approx(sigma_branch)

    def test_missing_metadata(self):
        with pytest.raises(MetadataError, match="metadata required"):
            compute_constants(n1_meta(), SolverConfig(), require=["E5"])

    def test_e4_not_claimed_for_two_boxes(self):
        inst = problems.make_two_set_feasibility(3, seed=0)
        c = compute_constants(inst.meta, SolverConfig(), inst.start)
        assert c.E4 is None
        with pytest.raises(ConfigurationError):
            inst.meta.designated_index()

    def test_alpha_lb_is_xi2_over_xi1(self):
        # the lower bound is xi2/xi1, not its reciprocal
        c = compute_constants(problems.make_lasso(5, seed=0).meta, SolverConfig(beta=0.8))
        assert c.alpha_lb == pytest.approx(0.8 * c.xi2 / c.xi1)
        assert c.alpha_lb < 0.8 * c.xi1 / c.xi2

    @settings(max_examples=300, deadline=None)
    @given(n=st.integers(1, 6), mu=st.floats(1e-3, 10), gam=st.floats(1e-3, 10), gamma=st.floats(0.05, 20),
           beta=st.floats(0.05, 1.95), delta=st.floats(0, 2), sigma=st.floats(0, 0.95), rho=st.floats(0.05, 5))
    def test_e5_membership(self, n, mu, gam, gamma, beta, delta, sigma, rho):
        meta = ProblemMeta(n=n, forward=[False] * n, lipschitz=[None] * n, cocoercivity=[gam] * n,
                           function_lipschitz=[None] * n, strong_monotonicity=mu, strong_index=n - 1)
        c = compute_constants(meta, SolverConfig(gamma=gamma, beta=beta, delta=delta, sigma=sigma, rho=rho))
        assert 0 < c.E5 <= 0.25

    def test_bounds_at_solution(self):
        inst = problems.make_lasso(6, seed=1)
        ps = inst.meta.p_star(1.0)
        c = compute_constants(inst.meta, SolverConfig(), ps)
        assert c.dist1 == 0
        assert c.Bx ** 2 == pytest.approx(2 * c.p_star_norm ** 2)


def fake_trace(alphas, xs):
    return [SimpleNamespace(k=t + 1, alpha=a, x=np.atleast_2d(np.asarray(x, float)), terminal=False)
            for t, (a, x) in enumerate(zip(alphas, xs))]


class TestErgodicAverages:
    def test_constant(self):
        xbar, xmean = ergodic_averages(fake_trace([0.3, 2.0, 1.1], [[[1, 2]]] * 3))
        np.testing.assert_allclose(xbar, [[1, 2]])
        np.testing.assert_allclose(xmean, [[1, 2]])

    def test_first(self):
        xbar, _ = ergodic_averages(fake_trace([0.5, 1.0], [[[3.0]], [[7.0]]]), 1)
        np.testing.assert_array_equal(xbar, [[3.0]])

    def test_weighted(self):
        xbar, xmean = ergodic_averages(fake_trace([1.0, 3.0], [[[0.0]], [[4.0]]]))
        assert xbar[0, 0] == 3.0 and xmean[0, 0] == 2.0

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            ergodic_averages([])

    def test_within_bx(self):
        inst = problems.make_lasso(10, seed=2)
        out, const, _ = run(inst, SolverConfig(max_iters=300), [])
        xbar, _ = ergodic_averages(out.trace)
        assert np.max(np.linalg.norm(xbar, axis=1)) <= const.Bx


class TestLedger:
    def test_terminal_first_step(self):
        inst = problems.make_random_inclusion(3, 2, seed=1, kinds=["l1", "affine_forward"])
        ps = inst.meta.p_star(1.0)
        out = solve(inst, SolverConfig(), ps)
        const = compute_constants(inst.meta, SolverConfig(), ps)
        led = rates.new_ledger(inst.meta, const)
        rates.update_ledger(led, out.trace[0])
        assert out.trace[0].terminal and led.k == 0
        assert all(np.isfinite(v) for v in led.sums.values())
        assert rates.check_summability(out.trace, inst.meta, const).verdict

    def test_geometric_sum(self):
        inst = problems.make_n1_quadratic()
        cfg = SolverConfig(max_iters=60, pi_tolerance=0.0)
        out, const, _ = run(inst, cfg, [])
        led = rates.new_ledger(inst.meta, const)
        for r in out.trace:
            led.update(r)
        k = led.k
        closed = sum(4.0 ** -t for t in range(1, k + 1))
        assert led.sums["z"] == pytest.approx(closed, rel=1e-12)
        assert led.sums["z"] < led.caps["z"] == 1.0

    def test_random_three_operator_run(self):
        inst = problems.make_random_inclusion(8, 3, seed=21, kinds=["box", "l1", "affine_forward"])
        _, _, certs = run(inst, SolverConfig(max_iters=1000), ["summability"])
        assert certs["summability"].residual <= 1e-8


class TestCertificates:
    def test_lasso_ergodic(self):
        inst = problems.make_lasso(20, seed=3)
        _, c, certs = run(inst, SolverConfig(max_iters=2000), ["ergodic_gap", "ergodic_gap_single"])
        assert certs["ergodic_gap"].verdict and certs["ergodic_gap_single"].verdict

    def test_ergodic_first_step(self):
        inst = problems.make_lasso(20, seed=3)
        out, c, _ = run(inst, SolverConfig(max_iters=1), [])
        r = out.trace[0]
        gap = sum(f(r.x[i]) for i, f in enumerate(inst.meta.objectives)) - inst.meta.f_star
        bound = c.E2 * c.dist1 ** 2 + c.E3 * c.dist1
        cert = rates.check_ergodic_gap(out.trace, inst.meta, c, 1)
        assert gap <= bound and cert.verdict
        assert cert.violations[0] == pytest.approx(gap - bound)

    def test_terminal_value_is_optimal(self):
        inst = problems.make_lasso(12, seed=4)
        ps = inst.meta.p_star(1.0)
        out = solve(inst, SolverConfig(), ps)
        assert out.trace[-1].terminal
        z = out.point.z
        val = sum(f(z) for f in inst.meta.objectives)
        assert val == pytest.approx(inst.meta.f_star, rel=1e-12, abs=1e-14)

    def test_two_box_consensus(self):
        inst = problems.make_two_set_feasibility(6, seed=2)
        out, c, certs = run(inst, SolverConfig(max_iters=500), ["ergodic_gap", "fejer"])
        assert certs["ergodic_gap"].verdict and certs["fejer"].verdict
        with pytest.raises(ConfigurationError):
            rates.check_ergodic_gap_single(out.trace, inst.meta, c)

    def test_two_box_scalar(self):
        inst = problems.make_two_set_feasibility(1, lo1=0, hi1=2, lo2=1, hi2=3)
        out = solve(inst, SolverConfig(max_iters=100), ProductPoint([-4.0], [[0.0]]))
        assert 1 - 1e-12 <= out.point.z[0] <= 2 + 1e-12

    def test_strong_rate_at_solution_point(self):
        # a record whose x_l equals z*: left side 0, right side >= 0
        inst = problems.make_strongly_monotone_affine(4, 2, 0.5, seed=3)
        ps = inst.meta.p_star(1.0)
        out = solve(inst, SolverConfig(), ps)
        c = compute_constants(inst.meta, SolverConfig(), ps)
        cert = rates.check_strong_rate(out.trace, inst.meta, c)
        assert cert.verdict

    def test_strong_rate_and_fitted_constant(self):
        inst = problems.make_strongly_monotone_affine(20, 2, 0.5, seed=4)
        out, c, certs = run(inst, SolverConfig(max_iters=5000), ["strong_rate"])
        assert certs["strong_rate"].residual <= 1e-8
        l = inst.meta.strong_index
        xl = np.array([r.x[l] for r in out.trace if not r.terminal])
        k = np.arange(1, len(xl) + 1)
        dist = np.sum((np.cumsum(xl, axis=0) / k[:, None] - inst.meta.z_star) ** 2, axis=1)
        C_emp = np.max(k * dist)
        assert C_emp <= c.strong_rate_factor * c.dist1 ** 2

    def test_linear_two_forward(self):
        inst = problems.make_cocoercive_strong(10, 2, 0.4, seed=5)
        _, c, certs = run(inst, SolverConfig(max_iters=500), ["linear_contraction"])
        assert certs["linear_contraction"].residual <= 1e-8 and 0 < c.E5 <= 0.25

    def test_linear_at_solution(self):
        inst = problems.make_cocoercive_strong(5, 2, 0.4, seed=6)
        ps = inst.meta.p_star(1.0)
        out = solve(inst, SolverConfig(), ps)
        c = compute_constants(inst.meta, SolverConfig(), ps)
        cert = rates.check_linear_contraction(out.trace, inst.meta, c)
        assert cert.verdict and cert.violations.size == 0

    def test_linear_needs_cocoercivity(self):
        inst = problems.make_strongly_monotone_affine(4, 2, 0.5, seed=0)
        c = compute_constants(inst.meta, SolverConfig(), inst.start)
        with pytest.raises(MetadataError):
            rates.check_linear_contraction([], inst.meta, c)

    def test_bounds_n1(self):
        inst = problems.make_n1_quadratic()
        _, c, certs = run(inst, SolverConfig(max_iters=100), ["bounds"])
        assert certs["bounds"].verdict and certs["bounds"].residual < 0

    def test_bounds_random(self):
        inst = problems.make_random_inclusion(10, 3, seed=9, kinds=["l1", "affine_backward", "affine_forward"])
        _, _, certs = run(inst, SolverConfig(max_iters=1000), ["bounds"])
        assert certs["bounds"].residual <= 1e-9

    def test_phi_and_gradient_decay(self):
        inst = problems.make_strongly_monotone_affine(20, 2, 0.5, seed=7)
        out = solve(inst, SolverConfig(max_iters=2000))
        steps = [r for r in out.trace if not r.terminal]
        m = max(1, len(steps) // 10)
        phi = np.array([r.phi for r in steps])
        pi = np.array([r.pi for r in steps])
        assert phi[-m:].mean() * 10 <= phi[:m].mean()
        assert np.sqrt(pi[-m:]).mean() * 10 <= np.sqrt(pi[:m]).mean()

    def test_incomplete_trace_rejected(self):
        inst = problems.make_lasso(5, seed=0)
        out = solve(inst, SolverConfig(max_iters=20, trace_stride=3, pi_tolerance=0.0))
        c = compute_constants(inst.meta, SolverConfig(), inst.start)
        with pytest.raises(ConfigurationError):
            rates.check_fejer(out.trace, inst.meta, c)

    def test_violation_detected(self):
        # a wrong oracle must be caught by the separation certificate
        inst = problems.make_lasso(5, seed=0)
        inst.meta.z_star = inst.meta.z_star + 1.0
        _, _, certs = run(inst, SolverConfig(max_iters=50), ["separation", "fejer"])
        assert not (certs["separation"].verdict and certs["fejer"].verdict)

    def test_certificate_serializes(self):
        inst = problems.make_lasso(5, seed=0)
        _, _, certs = run(inst, SolverConfig(max_iters=10), ["fejer"])
        d = certs["fejer"].to_dict()
        assert d["verdict"] == "pass" and d["kind"] == "fejer" and d["tolerance"] == 1e-9

    def test_unknown_certificate(self):
        with pytest.raises(ConfigurationError):
            rates.certify([], n1_meta(), None, ["nope"])

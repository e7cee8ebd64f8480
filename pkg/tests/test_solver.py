import numpy as np
import pytest

from helpers import transcribe_iteration
from projsplit import problems
from projsplit.errors import ConfigurationError, StepsizeError
from projsplit.operators import (
    BackwardOperator,
    OperatorSlot,
    make_affine,
    make_scaled_identity,
    make_soft_threshold,
)
from projsplit.solver import (
    ProjectiveSplitting,
    SolverConfig,
    SolveStatus,
    n1_extragradient_reference,
    n1_proximal_point_reference,
    phi_gradient,
    phi_line_form,
    phi_value,
    solve,
)
from projsplit.space import ProductPoint, axpy, gamma_norm_sq, zero_point


def quad(c=0.0, d=1):
    """Backward slot for 1/2 ||x - c||^2 through its closed-form prox."""
    c = np.full(d, float(c))
    return OperatorSlot(0, BackwardOperator(prox=lambda a, rho: (a + rho * c) / (1 + rho), name="q"))


def point(z, w=None):
    z = np.atleast_1d(np.asarray(z, float))
    return ProductPoint(z, np.zeros((0, z.size)) if w is None else np.asarray(w, float))


def one_record(slots, p, **cfg):
    return ProjectiveSplitting(slots, SolverConfig(**cfg), p).iterate()


class TestPhi:
    def test_zero_when_all_x_equal_z(self):
        op = make_scaled_identity(1.0)
        slots = [OperatorSlot(0, op), OperatorSlot(1, op)]
        rec = one_record(slots, ProductPoint(np.zeros(2), np.zeros((1, 2))), rho=0.5)
        assert rec.phi == 0 and phi_value(rec, rec.p_before) == 0

    @pytest.mark.parametrize("rho", [0.3, 1.0, 2.5])
    def test_n1_backward(self, rho):
        rec = one_record([quad(1.0)], point(0.0), rho=rho)
        assert rec.phi == pytest.approx(rho * float(np.sum(rec.y ** 2)), rel=1e-14)

    def test_line_form_equals_definition(self):
        inst = problems.make_random_inclusion(6, 2, seed=5, kinds=["l1", "affine_forward"])
        rng = np.random.default_rng(0)
        p = ProductPoint(rng.standard_normal(6), rng.standard_normal((1, 6)))
        rec = one_record(inst.slots, p)
        direct = phi_value(rec, rec.p_before)
        line = phi_line_form(rec)
        scale = np.sum(np.abs(rec.x * rec.y)) + np.abs(rec.p_before.z @ rec.v) + 1.0
        assert abs(line - direct) <= 1e-10 * scale
        assert rec.phi == pytest.approx(direct, rel=1e-10, abs=1e-14)

    def test_affine_in_p(self):
        inst = problems.make_random_inclusion(4, 3, seed=2, kinds=["box", "l1", "affine_backward"])
        rec = one_record(inst.slots, zero_point(3, 4))
        rng = np.random.default_rng(1)
        p = ProductPoint(rng.standard_normal(4), rng.standard_normal((2, 4)))
        q = ProductPoint(rng.standard_normal(4), rng.standard_normal((2, 4)))
        mid = axpy(0.5, axpy(-1.0, p, q), p)
        assert phi_value(rec, mid) == pytest.approx(0.5 * (phi_value(rec, p) + phi_value(rec, q)))


class TestGradient:
    def test_n1(self):
        rec = one_record([quad(1.0)], point(0.0), gamma=2.0)
        g = phi_gradient(rec)
        np.testing.assert_allclose(g.z, rec.y[0] / 2.0)
        assert g.w.shape == (0, 1)

    def test_norm_is_pi(self):
        inst = problems.make_random_inclusion(5, 4, seed=3, kinds=["l1", "box", "affine_forward",
                                                                   "affine_backward"])
        rng = np.random.default_rng(2)
        rec = one_record(inst.slots, ProductPoint(rng.standard_normal(5), rng.standard_normal((3, 5)), 0.7),
                         gamma=0.7)
        assert gamma_norm_sq(phi_gradient(rec)) == pytest.approx(rec.pi, rel=1e-12)
        u, v = rec.u, rec.v
        assert rec.pi == pytest.approx(np.sum(u * u) + v @ v / 0.7, rel=1e-12)

    def test_solution_has_zero_gradient(self):
        inst = problems.make_cocoercive_strong(3, 2, 0.5, seed=1)
        m = inst.meta
        rho = [0.1, 0.1]
        rec = one_record(inst.slots, ProductPoint(m.z_star, m.w_star), rho=rho)
        assert rec.terminal
        assert rec.pi <= 1e-24


class TestIterate:
    def test_halving_recursion(self):
        out = solve([quad(1.0)], SolverConfig(max_iters=30), point(0.0))
        first = out.trace[0]
        assert first.x == pytest.approx([0.5]) and first.y == pytest.approx([-0.5])
        assert (first.phi, first.pi, first.alpha) == pytest.approx((0.25, 0.25, 1.0))
        zs = [r.p_after.z[0] for r in out.trace]
        k = np.arange(2, len(zs) + 2)
        np.testing.assert_allclose(zs, 1 - 2.0 ** (1 - k), rtol=0, atol=1e-15)

    def test_start_at_solution_returns_solution(self):
        inst = problems.make_random_inclusion(4, 3, seed=7, kinds=["l1", "box", "affine_backward"])
        m = inst.meta
        out = solve(inst, SolverConfig(), ProductPoint(m.z_star, m.w_star))
        assert out.status is SolveStatus.CONVERGED and out.iterations == 1
        rec = out.trace[0]
        assert rec.terminal and rec.alpha == 0
        np.testing.assert_array_equal(out.point.z, rec.x[-1])
        np.testing.assert_array_equal(out.point.w, rec.y[:-1])
        inst.meta.z_star, inst.meta.w_star = out.point.z, out.point.w
        assert problems.oracle_residual(inst) <= 1e-10

    def test_matches_transcription(self):
        inst = problems.make_lasso(8, seed=4)
        f1, f2 = inst.slots[0].op, inst.slots[1].op
        rng = np.random.default_rng(3)
        z, w = rng.standard_normal(8), rng.standard_normal((1, 8))
        rho = [0.7, 0.5 / f2.lipschitz]
        rec = one_record(inst.slots, ProductPoint(z, w), rho=rho)
        ref = transcribe_iteration([("b", f1.prox), ("f", f2.apply)], list(z), list(w), rho)
        np.testing.assert_allclose(rec.x, ref["x"], rtol=0, atol=1e-13)
        np.testing.assert_allclose(rec.y, ref["y"], rtol=0, atol=1e-13)
        assert rec.pi == pytest.approx(ref["pi"], rel=1e-12)
        assert rec.phi == pytest.approx(ref["phi"], rel=1e-10)
        np.testing.assert_allclose(rec.p_after.z, ref["z"], rtol=0, atol=1e-12)
        np.testing.assert_allclose(rec.p_after.w, ref["w"], rtol=0, atol=1e-12)

    def test_update_is_gradient_step(self):
        inst = problems.make_random_inclusion(6, 3, seed=8, kinds=["l1", "affine_forward", "affine_backward"])
        out = solve(inst, SolverConfig(beta=1.3, gamma=2.0, max_iters=50))
        for rec in out.trace:
            if rec.terminal:
                continue
            g = phi_gradient(rec)
            expect = axpy(-rec.beta * rec.phi / rec.pi, g, rec.p_before)
            np.testing.assert_allclose(rec.p_after.z, expect.z, rtol=0, atol=1e-12)
            np.testing.assert_allclose(rec.p_after.w, expect.w, rtol=0, atol=1e-12)

    def test_same_snapshot_for_all_operators(self):
        op = make_scaled_identity(1.0)
        slots = [OperatorSlot(i, op) for i in range(3)]
        p = ProductPoint(np.array([1.0]), np.array([[0.5], [-0.25]]))
        rec = one_record(slots, p, rho=0.5)
        wfull = np.array([0.5, -0.25, -0.25])
        np.testing.assert_allclose(rec.x[:, 0], 1.0 - 0.5 * (1.0 - wfull))


class TestSolve:
    def test_strongly_monotone_affine(self):
        inst = problems.make_strongly_monotone_affine(10, 2, 0.5, seed=0)
        out = solve(inst, SolverConfig(max_iters=5000))
        assert np.linalg.norm(out.point.z - inst.meta.z_star) <= 1e-6

    def test_n1_is_proximal_point(self):
        s = quad(2.0, d=3)
        out = solve([s], SolverConfig(max_iters=40, pi_tolerance=0.0), point(np.zeros(3)))
        for rec in out.trace:
            np.testing.assert_allclose(rec.p_after.z, s.op.prox(rec.p_before.z, 1.0), rtol=0, atol=1e-14)

    def test_zero_budget(self):
        p = ProductPoint(np.array([1.0, 2.0]), np.array([[3.0, 4.0]]))
        inst = problems.make_lasso(2, seed=0)
        out = solve(inst, SolverConfig(max_iters=0), p)
        assert out.status is SolveStatus.MAX_ITERS and out.trace == [] and out.iterations == 0
        np.testing.assert_array_equal(out.point.flat(), p.flat())

    def test_stop_predicate(self):
        inst = problems.make_lasso(5, seed=0)
        out = solve(inst, SolverConfig(max_iters=100), stop=lambda r: r.k == 7)
        assert out.status is SolveStatus.STOPPED and out.trace[-1].k == 7

    def test_stride(self):
        inst = problems.make_strongly_monotone_affine(5, 2, 0.5, seed=0)
        seen = []
        out = solve(inst, SolverConfig(max_iters=20, trace_stride=4, pi_tolerance=0.0),
                    callback=lambda r: seen.append(r.k))
        assert seen == list(range(1, 21))
        assert [r.k for r in out.trace] == [1, 5, 9, 13, 17, 20]

    def test_deterministic(self):
        cfg = SolverConfig(max_iters=50, sigma=0.1, delta=0.05, error_mode="scaled-random", error_seed=4)
        a = solve(problems.make_random_inclusion(5, 3, seed=1), cfg)
        b = solve(problems.make_random_inclusion(5, 3, seed=1), cfg)
        for r, s in zip(a.trace, b.trace):
            assert r.phi == s.phi and np.array_equal(r.e, s.e)

    def test_error_status_when_not_raising(self):
        def bad(a, rho):
            raise np.linalg.LinAlgError("boom")

        out = solve([OperatorSlot(0, BackwardOperator(prox=bad))], SolverConfig(max_iters=3),
                    point(0.0), raise_errors=False)
        assert out.status is SolveStatus.ERROR and "boom" in out.message


class TestConfig:
    def test_defaults(self):
        slots = problems.make_lasso(4, seed=0).slots
        plan = SolverConfig().stepsizes(slots)
        assert plan.lower[0] == 1.0
        assert plan.lower[1] == pytest.approx(0.9 / slots[1].op.lipschitz)

    def test_forward_bound_message(self):
        with pytest.raises(StepsizeError, match="needs rho < 1/L"):
            SolverConfig(rho=[1.0, 2.0]).stepsizes(problems.make_lasso(4, seed=0).slots)

    @pytest.mark.parametrize("beta", [0.0, 2.0, -0.5, 2.5])
    def test_beta_range(self, beta):
        with pytest.raises(StepsizeError):
            SolverConfig(beta=beta)

    def test_callable_beta_checked(self):
        cfg = SolverConfig(beta=lambda k: 1.5, beta_bounds=(0.5, 1.2))
        with pytest.raises(StepsizeError):
            cfg.beta_at(1)

    def test_callable_rho_needs_bounds(self):
        with pytest.raises(ConfigurationError):
            SolverConfig(rho=lambda i, k: 1.0).stepsizes([quad()])

    def test_callable_rho_out_of_bounds(self):
        cfg = SolverConfig(rho=lambda i, k: 3.0, rho_bounds=([0.5], [2.0]))
        with pytest.raises(StepsizeError):
            solve([quad()], cfg, point(1.0))

    def test_sigma_range(self):
        with pytest.raises(ConfigurationError):
            SolverConfig(sigma=1.0)


class TestProxPointReference:
    def test_halving(self):
        ref = n1_proximal_point_reference(lambda a, r: a / (1 + r), 1.0, 1.0, 2.0, 2)
        np.testing.assert_array_equal(ref[:, 0], [2.0, 1.0, 0.5])

    def test_relaxed(self):
        ref = n1_proximal_point_reference(lambda a, r: a / (1 + r), 1.0, 0.5, 2.0, 1)
        assert ref[1, 0] == 1.5

    def test_random_stepsizes_match_solver(self):
        rng = np.random.default_rng(5)
        rhos = rng.uniform(0.5, 2.0, 100)
        s = quad(0.0, d=2)
        cfg = SolverConfig(rho=lambda i, k: rhos[k - 1], rho_bounds=([0.5], [2.0]),
                           max_iters=100, pi_tolerance=0.0)
        out = solve([s], cfg, point([2.0, -1.0]))
        ref = n1_proximal_point_reference(s.op.prox, lambda t: rhos[t - 1], 1.0, [2.0, -1.0], 100)
        zs = np.array([out.trace[0].p_before.z] + [r.p_after.z for r in out.trace])
        assert np.max(np.abs(zs - ref)) < 1e-12


class TestExtragradientReference:
    def test_hand_step(self):
        ref = n1_extragradient_reference(lambda z: 2 * z, 0.25, 1.0, 1.0, 1)
        assert ref[1, 0] == 0.5
        out = solve([OperatorSlot(0, make_scaled_identity(2.0))], SolverConfig(rho=0.25, max_iters=1),
                    point(1.0))
        assert out.point.z[0] == pytest.approx(0.5, abs=1e-15)

    def test_immediate_solution(self):
        out = solve([OperatorSlot(0, make_scaled_identity(2.0))], SolverConfig(rho=0.25), point(0.0))
        assert out.status is SolveStatus.CONVERGED and out.iterations == 1
        ref = n1_extragradient_reference(lambda z: 2 * z, 0.25, 1.0, 0.0, 5)
        assert ref.shape[0] == 2 and not ref.any()

    def test_affine_rotation_matches_solver(self):
        rng = np.random.default_rng(6)
        S = rng.standard_normal((4, 4))
        K = rng.standard_normal((4, 4))
        op = make_affine(S @ S.T / 4 + (K - K.T), np.zeros(4))
        rho = 0.8 / op.lipschitz
        z1 = rng.standard_normal(4)
        out = solve([OperatorSlot(0, op)], SolverConfig(rho=rho, max_iters=200, pi_tolerance=0.0),
                    point(z1))
        ref = n1_extragradient_reference(op.apply, rho, 1.0, z1, 200)
        zs = np.array([z1] + [r.p_after.z for r in out.trace])
        assert zs.shape == ref.shape
        assert np.max(np.abs(zs - ref)) < 1e-12

    def test_slot_index_must_match_position(self):
        with pytest.raises(ConfigurationError):
            ProjectiveSplitting([OperatorSlot(1, make_soft_threshold(1.0))], SolverConfig(), point(0.0))

"""Block solves, objective, gradients, and the outer descent loop."""

import numpy as np
import pytest

from fofreg import (
    Dataset,
    FitConfig,
    FunctionSample,
    KernelSpec,
    SolverState,
    ThetaQuadratic,
    ValidationError,
    build_theta_quadratic,
    fit_bcd,
    make_grid,
    make_sine_projection,
    norm_sq,
    objective_q,
    solve_theta_nncg,
    solve_u,
)
from fofreg.solver import KKT_TOL, Workspace
from oracles import (
    apply_block_operator,
    naive_dtilde_entry,
    naive_ktilde_entry,
    naive_objective,
    random_tiny_problem,
    span_projection,
)


def uniform_grid(points, ndim=1):
    return make_grid([np.linspace(0.0, 1.0, points)] * ndim)


def kkt_ok(quad, theta, tol=KKT_TOL):
    g = quad.gradient(theta)
    gn = np.linalg.norm(g)
    if np.any(g[theta == 0.0] < -tol):
        return False
    return bool(np.all(np.abs(g[theta > 0.0]) <= tol * (1.0 + gn)))


class TestFitConfig:
    def test_defaults_valid(self):
        FitConfig()

    def test_rejects_bad_rho(self):
        with pytest.raises(ValidationError):
            FitConfig(backtrack_rho=1.0)

    def test_rejects_negative_theta_init(self):
        with pytest.raises(ValidationError):
            FitConfig(theta_init=(1.0, -0.5))

    def test_rejects_nonpositive_lambda1(self):
        with pytest.raises(ValidationError):
            FitConfig(lambda1=0.0)


class TestThetaQuadratic:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValidationError):
            ThetaQuadratic(
                ktilde=np.array([[1.0, 0.5], [0.0, 1.0]]),
                dtilde=np.zeros(2),
                lambda2=0.0,
            )

    def test_rejects_indefinite(self):
        with pytest.raises(ValidationError):
            ThetaQuadratic(
                ktilde=np.array([[1.0, 0.0], [0.0, -1.0]]),
                dtilde=np.zeros(2),
                lambda2=0.0,
            )

    def test_gradient_formula(self):
        quad = ThetaQuadratic(
            ktilde=np.array([[2.0, 0.5], [0.5, 1.0]]),
            dtilde=np.array([1.0, -3.0]),
            lambda2=0.4,
        )
        theta = np.array([0.7, 1.1])
        expected = quad.dtilde + 2.0 * quad.ktilde @ theta + 0.4
        np.testing.assert_allclose(quad.gradient(theta), expected)


class TestObjective:
    def test_zero_u_zero_theta_gives_response_energy(self):
        rng = np.random.default_rng(0)
        data, specs, op = random_tiny_problem(rng)
        zero_u = [FunctionSample(op.grid, np.zeros(op.grid.node_count))] * data.n
        q = objective_q(zero_u, np.zeros(data.p), data, specs, op, 0.1, 0.4)
        expected = sum(norm_sq(y) for y in data.responses)
        assert q == pytest.approx(expected, rel=1e-14)

    def test_lasso_term_alone_scales_with_theta(self):
        rng = np.random.default_rng(1)
        data, specs, op = random_tiny_problem(rng)
        zero_u = [FunctionSample(op.grid, np.zeros(op.grid.node_count))] * data.n
        lam2 = 0.4
        q0 = objective_q(zero_u, np.zeros(data.p), data, specs, op, 0.1, lam2)
        q1 = objective_q(zero_u, np.ones(data.p), data, specs, op, 0.1, lam2)
        assert q1 - q0 == pytest.approx(lam2 * data.p, abs=1e-12)

    def test_matches_naive_triple_loop(self):
        rng = np.random.default_rng(2)
        data, specs, op = random_tiny_problem(rng, n=3, p=2, nodes=17, kappa=2)
        u = [FunctionSample(op.grid, rng.normal(size=17)) for _ in range(3)]
        theta = rng.uniform(0.0, 2.0, size=2)
        fast = objective_q(u, theta, data, specs, op, 0.1, 0.4)
        slow = naive_objective(u, theta, data, specs, op, 0.1, 0.4)
        assert fast == pytest.approx(slow, rel=1e-10)

    def test_rejects_negative_theta(self):
        rng = np.random.default_rng(3)
        data, specs, op = random_tiny_problem(rng)
        u = [FunctionSample(op.grid, np.zeros(op.grid.node_count))] * data.n
        with pytest.raises(ValidationError):
            objective_q(u, np.array([-1.0, 1.0]), data, specs, op, 0.1, 0.4)


class TestSolveU:
    def test_scalar_case_closed_form(self):
        grid = uniform_grid(65)
        op = make_sine_projection([1], grid)
        w1 = op.eigenfunctions[0]
        c, lam1 = 1.7, 0.3
        data = Dataset(
            responses=(FunctionSample(grid, c * w1.values),),
            covariates=((FunctionSample(grid, np.ones(65)),),),
        )
        (u1,) = solve_u([1.0], data, [KernelSpec("gaussian")], op, lam1)
        beta, delta = 1.0, 0.5  # single sample: Gram [[1]]; sine eigenvalue 1/2
        expected = c / (beta * delta + lam1) * w1.values
        np.testing.assert_allclose(u1.values, expected, atol=1e-12)

    def test_orthogonal_responses_give_zero(self):
        grid = uniform_grid(65)
        op = make_sine_projection([2], grid)
        off_span = FunctionSample(grid, np.sin(8 * np.pi * grid.axes[0]))
        data = Dataset(
            responses=(off_span, off_span),
            covariates=(
                (
                    FunctionSample(grid, grid.axes[0]),
                    FunctionSample(grid, 1.0 + grid.axes[0]),
                ),
            ),
        )
        u = solve_u([1.0], data, [KernelSpec("gaussian")], op, 0.1)
        for ui in u:
            np.testing.assert_allclose(ui.values, 0.0, atol=1e-10)

    def test_solves_linear_system_against_dense_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            data, specs, op = random_tiny_problem(rng, n=4, p=2, nodes=33, kappa=3)
            theta = rng.uniform(0.0, 2.0, size=2)
            lam1 = 0.2
            u = solve_u(theta, data, specs, op, lam1)
            lhs = apply_block_operator(data, specs, op, theta, u)
            resid = 0.0
            scale = 0.0
            for i in range(data.n):
                target = span_projection(op, data.responses[i])
                diff = lhs[i] + lam1 * u[i] - target
                resid += norm_sq(diff)
                scale += norm_sq(target)
            assert np.sqrt(resid) <= 1e-8 * max(np.sqrt(scale), 1e-12)

    def test_rejects_nonpositive_lambda1(self):
        rng = np.random.default_rng(5)
        data, specs, op = random_tiny_problem(rng)
        with pytest.raises(ValidationError):
            solve_u(np.ones(data.p), data, specs, op, 0.0)

    def test_u_optimality_under_eigenfunction_perturbations(self):
        rng = np.random.default_rng(6)
        data, specs, op = random_tiny_problem(rng, n=3, p=2, nodes=33, kappa=3)
        theta = rng.uniform(0.2, 1.5, size=2)
        lam1 = 0.15
        u = solve_u(theta, data, specs, op, lam1)
        # ridge part of the objective only (no lasso term)
        base = objective_q(u, theta, data, specs, op, lam1, 0.0)
        for i in range(data.n):
            for w in op.eigenfunctions:
                for sign in (+1.0, -1.0):
                    bumped = list(u)
                    bumped[i] = u[i] + sign * 1e-4 * w
                    q = objective_q(bumped, theta, data, specs, op, lam1, 0.0)
                    assert q >= base - 1e-12 * max(1.0, abs(base))


class TestBuildThetaQuadratic:
    def test_zero_u_gives_zero_quadratic(self):
        rng = np.random.default_rng(7)
        data, specs, op = random_tiny_problem(rng)
        zero_u = [FunctionSample(op.grid, np.zeros(op.grid.node_count))] * data.n
        quad = build_theta_quadratic(zero_u, data, specs, op, 0.1, 0.4)
        np.testing.assert_array_equal(quad.ktilde, np.zeros((data.p, data.p)))
        np.testing.assert_array_equal(quad.dtilde, np.zeros(data.p))
        np.testing.assert_allclose(quad.gradient(np.zeros(data.p)), 0.4)

    def test_entries_match_naive_loops(self):
        rng = np.random.default_rng(8)
        data, specs, op = random_tiny_problem(rng, n=3, p=2, nodes=17, kappa=2)
        u = [FunctionSample(op.grid, rng.normal(size=17)) for _ in range(3)]
        lam1 = 0.1
        quad = build_theta_quadratic(u, data, specs, op, lam1, 0.4)
        for l in range(2):
            for h in range(2):
                assert quad.ktilde[l, h] == pytest.approx(
                    naive_ktilde_entry(data, specs, op, u, l, h), rel=1e-10
                )
            assert quad.dtilde[l] == pytest.approx(
                naive_dtilde_entry(data, specs, op, u, lam1, l), rel=1e-10
            )

    def test_quadratic_reproduces_objective_up_to_constant(self):
        rng = np.random.default_rng(9)
        data, specs, op = random_tiny_problem(rng, n=3, p=2, nodes=17, kappa=2)
        u = [FunctionSample(op.grid, rng.normal(size=17)) for _ in range(3)]
        lam1, lam2 = 0.1, 0.4
        quad = build_theta_quadratic(u, data, specs, op, lam1, lam2)
        const = sum(norm_sq(y) for y in data.responses)
        for _ in range(5):
            theta = rng.uniform(0.0, 2.0, size=2)
            q = objective_q(u, theta, data, specs, op, lam1, lam2)
            assert quad.value(theta) + const == pytest.approx(q, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        for _ in range(8):
            data, specs, op = random_tiny_problem(rng, n=3, p=3, nodes=17, kappa=2)
            u = [FunctionSample(op.grid, rng.normal(size=17)) for _ in range(3)]
            quad = build_theta_quadratic(u, data, specs, op, 0.1, 0.4)
            theta = rng.uniform(0.1, 2.0, size=3)
            grad = quad.gradient(theta)
            step = 1e-5
            for l in range(3):
                plus, minus = theta.copy(), theta.copy()
                plus[l] += step
                minus[l] -= step
                approx = (quad.value(plus) - quad.value(minus)) / (2 * step)
                assert grad[l] == pytest.approx(approx, rel=1e-5, abs=1e-8)

    def test_ktilde_psd_on_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            data, specs, op = random_tiny_problem(rng, n=4, p=3, nodes=17, kappa=2)
            u = [FunctionSample(op.grid, rng.normal(size=17)) for _ in range(4)]
            quad = build_theta_quadratic(u, data, specs, op, 0.1, 0.4)
            eigs = np.linalg.eigvalsh(quad.ktilde)
            assert eigs[0] >= -1e-8 * max(eigs[-1], 0.0)


class TestSolveThetaNncg:
    def test_start_at_minimizer_returns_immediately(self):
        quad = ThetaQuadratic(
            ktilde=np.eye(2), dtilde=np.array([-4.0, 2.0]), lambda2=0.0
        )
        start = np.array([2.0, 0.0])  # the constrained minimizer
        res = solve_theta_nncg(quad, start, FitConfig())
        assert res.converged and res.iterations <= 1
        np.testing.assert_allclose(res.theta, start, atol=1e-10)

    def test_mixed_active_set_hand_solution(self):
        # lin = dtilde + lambda2 = (-4, 2): unconstrained min (2, -1) -> (2, 0)
        quad = ThetaQuadratic(
            ktilde=np.eye(2), dtilde=np.array([-4.4, 1.6]), lambda2=0.4
        )
        res = solve_theta_nncg(quad, np.ones(2), FitConfig())
        np.testing.assert_allclose(res.theta, [2.0, 0.0], atol=1e-6)
        assert res.theta[1] == 0.0  # boundary coordinate is a literal zero

    def test_diagonal_closed_form(self):
        quad = ThetaQuadratic(
            ktilde=np.diag([1.0, 2.0]), dtilde=np.array([-2.4, -8.4]), lambda2=0.4
        )
        res = solve_theta_nncg(quad, np.ones(2), FitConfig())
        np.testing.assert_allclose(res.theta, [1.0, 2.0], atol=1e-6)

    def test_pure_lasso_drives_to_zero(self):
        quad = ThetaQuadratic(
            ktilde=np.zeros((3, 3)), dtilde=np.zeros(3), lambda2=0.4
        )
        res = solve_theta_nncg(quad, np.ones(3), FitConfig())
        np.testing.assert_array_equal(res.theta, np.zeros(3))

    def test_output_nonnegative_no_negative_zero(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            p = int(rng.integers(2, 6))
            a = rng.normal(size=(p, p))
            quad = ThetaQuadratic(
                ktilde=a.T @ a + 0.1 * np.eye(p),
                dtilde=rng.normal(scale=2.0, size=p),
                lambda2=0.4,
            )
            res = solve_theta_nncg(quad, rng.uniform(0, 2, size=p), FitConfig())
            assert np.all(res.theta >= 0.0)
            assert not np.any(np.signbit(res.theta))

    def test_descends_from_start(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            p = 4
            a = rng.normal(size=(p, p))
            quad = ThetaQuadratic(
                ktilde=a.T @ a, dtilde=rng.normal(size=p), lambda2=0.4
            )
            theta0 = rng.uniform(0, 2, size=p)
            res = solve_theta_nncg(quad, theta0, FitConfig())
            assert quad.value(res.theta) <= quad.value(theta0) + 1e-12

    def test_armijo_record(self):
        rng = np.random.default_rng(14)
        a = rng.normal(size=(4, 4))
        quad = ThetaQuadratic(
            ktilde=a.T @ a + 0.1 * np.eye(4),
            dtilde=rng.normal(scale=2.0, size=4),
            lambda2=0.4,
        )
        res = solve_theta_nncg(quad, np.ones(4), FitConfig())
        assert res.steps  # at least one accepted step
        for alpha, dir_norm_sq, h_before, h_after in res.steps:
            assert h_after <= h_before - alpha * alpha * dir_norm_sq

    def test_kkt_on_converged_output(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            p = int(rng.integers(2, 7))
            a = rng.normal(size=(p, p))
            quad = ThetaQuadratic(
                ktilde=a.T @ a + 0.05 * np.eye(p),
                dtilde=rng.normal(scale=3.0, size=p),
                lambda2=0.4,
            )
            res = solve_theta_nncg(quad, rng.uniform(0, 2, size=p), FitConfig())
            assert res.converged
            assert kkt_ok(quad, res.theta)

    def test_rejects_negative_start(self):
        quad = ThetaQuadratic(ktilde=np.eye(2), dtilde=np.zeros(2), lambda2=0.0)
        with pytest.raises(ValidationError):
            solve_theta_nncg(quad, np.array([-0.1, 1.0]), FitConfig())


class TestFitBcd:
    def test_zero_response_gives_zero_model(self):
        grid = uniform_grid(33)
        op = make_sine_projection([2], grid)
        n = 3
        data = Dataset(
            responses=tuple(
                FunctionSample(grid, np.zeros(33)) for _ in range(n)
            ),
            covariates=(
                tuple(FunctionSample(grid, i * grid.axes[0]) for i in range(1, n + 1)),
                tuple(
                    FunctionSample(grid, np.sin(i * grid.axes[0]))
                    for i in range(1, n + 1)
                ),
            ),
        )
        state = fit_bcd(data, KernelSpec("gaussian"), op, FitConfig())
        np.testing.assert_array_equal(state.theta, np.zeros(2))
        assert state.objective_trace[-1] == pytest.approx(0.0, abs=1e-12)

    def test_monotone_trace_random_instances(self):
        rng = np.random.default_rng(16)
        for _ in range(3):
            data, specs, op = random_tiny_problem(rng, n=4, p=2, nodes=17, kappa=2)
            cfg = FitConfig(bcd_max_iters=40)
            state = fit_bcd(data, specs, op, cfg)
            trace = state.objective_trace
            for prev, cur in zip(trace, trace[1:]):
                assert cur <= prev + 1e-10 * abs(prev)

    def test_reports_non_convergence_without_failing(self):
        rng = np.random.default_rng(17)
        data, specs, op = random_tiny_problem(rng, n=4, p=2, nodes=17, kappa=2)
        state = fit_bcd(data, specs, op, FitConfig(bcd_max_iters=1))
        assert state.iterations == 1
        assert not state.converged

    def test_deterministic(self):
        rng = np.random.default_rng(18)
        data, specs, op = random_tiny_problem(rng, n=4, p=2, nodes=17, kappa=2)
        cfg = FitConfig(bcd_max_iters=25)
        s1 = fit_bcd(data, specs, op, cfg)
        s2 = fit_bcd(data, specs, op, cfg)
        np.testing.assert_array_equal(s1.theta, s2.theta)
        assert s1.objective_trace == s2.objective_trace

    def test_workspace_paths_match_public_ops(self):
        # the fused iteration must agree with the public per-op entry points
        rng = np.random.default_rng(19)
        data, specs, op = random_tiny_problem(rng, n=4, p=2, nodes=17, kappa=2)
        cfg = FitConfig()
        ws = Workspace(data, specs, op)
        theta = np.ones(2)
        u_public = solve_u(theta, data, specs, op, cfg.lambda1)
        u_values = ws.solve_u_values(theta, cfg.lambda1)
        np.testing.assert_array_equal(
            u_values, np.stack([f.values for f in u_public])
        )
        quad_public = build_theta_quadratic(
            u_public, data, specs, op, cfg.lambda1, cfg.lambda2
        )
        coeffs = ws.project(u_values)
        quad_ws = ws.theta_quadratic(
            coeffs, ws.component_coeffs(coeffs), cfg.lambda1, cfg.lambda2
        )
        np.testing.assert_array_equal(quad_public.ktilde, quad_ws.ktilde)
        np.testing.assert_array_equal(quad_public.dtilde, quad_ws.dtilde)


class TestSolverState:
    def test_rejects_increasing_trace(self):
        with pytest.raises(ValidationError):
            SolverState(
                u=(),
                theta=np.zeros(2),
                objective_trace=(1.0, 2.0),
                converged=True,
                iterations=2,
            )

    def test_rejects_negative_zero_theta(self):
        with pytest.raises(ValidationError):
            SolverState(
                u=(),
                theta=np.array([0.0, -0.0]),
                objective_trace=(1.0,),
                converged=True,
                iterations=1,
            )

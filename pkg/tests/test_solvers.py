import numpy as np
import pytest

from uqadmm.core import NoiseCov, PriorSpec, Subproblem
from uqadmm.operators import MatrixOperator, identity_operator, toy_nonlinear_operator
from uqadmm.solvers import (
    TRACE_HEADER,
    Augmentation,
    IterRecord,
    IterTrace,
    LeastSquaresObjective,
    NonDescentDirectionError,
    SolverConfig,
    SolverStatus,
    armijo_linesearch,
    gauss_newton,
    nlcg,
    nlcg_beta,
    pcg,
)


def spd_matrix(n, low, high, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(np.linspace(low, high, n)) @ q.T


def linear_objective(seed=3, rows=12, n=6, alpha=0.5, scale=1.0):
    rng = np.random.default_rng(seed)
    A = scale * rng.standard_normal((rows, n))
    prior = PriorSpec.smallness(n, alpha)
    sub = Subproblem(MatrixOperator(A), rng.standard_normal(rows), NoiseCov.identity(rows), prior)
    return LeastSquaresObjective([sub], prior), A, sub


def test_pcg_solves_spd_system():
    A = spd_matrix(10, 1.0, 50.0)
    b = np.arange(1.0, 11.0)

    result = pcg(lambda v: A @ v, b, max_iter=100, tol=1e-12)

    np.testing.assert_allclose(A @ result.x, b, rtol=1e-9, atol=1e-9)
    assert result.rel_res <= 1e-12
    assert not result.negative_curvature


def test_pcg_zero_rhs_returns_zero_without_iterating():
    result = pcg(lambda v: 2.0 * v, np.zeros(4))

    np.testing.assert_array_equal(result.x, np.zeros(4))
    assert result.iters == 0


def test_pcg_residual_norms_decrease_on_well_conditioned_system():
    A = spd_matrix(8, 1.0, 1.2, seed=4)

    result = pcg(lambda v: A @ v, np.ones(8), tol=1e-14)

    norms = np.array(result.residual_norms)
    assert np.all(np.diff(norms) < 0)


def test_pcg_jacobi_preconditioner_on_diagonal_system_converges_in_one_step():
    diag = np.array([1.0, 10.0, 100.0, 1000.0])

    result = pcg(lambda v: diag * v, np.ones(4), precond=diag)

    assert result.iters == 1
    np.testing.assert_allclose(result.x, 1.0 / diag)


def test_pcg_flags_negative_curvature():
    result = pcg(lambda v: -v, np.ones(3))

    assert result.negative_curvature
    assert result.iters == 0


def test_armijo_accepts_full_step_on_quadratic():
    f = lambda x: float(x @ x)
    x = np.array([1.0, -2.0])
    g = 2 * x

    assert armijo_linesearch(f, x, -0.5 * g, g) == 1.0


def test_armijo_halves_until_sufficient_decrease():
    f = lambda x: float(x @ x)
    x = np.array([1.0])
    g = 2 * x

    # the full step -4 overshoots to x = -3
    assert armijo_linesearch(f, x, np.array([-4.0]), g) == 0.25


def test_armijo_rejects_non_descent_direction():
    x = np.ones(2)
    with pytest.raises(NonDescentDirectionError):
        armijo_linesearch(lambda v: float(v @ v), x, x, 2 * x)


def test_armijo_gives_up_after_budget():
    calls = []

    def f(v):
        calls.append(v)
        return 0.0 if len(calls) == 1 else 1.0

    assert armijo_linesearch(f, np.zeros(1), np.array([-1.0]), np.array([1.0]), max_halvings=3) is None
    assert len(calls) == 1 + 4


def test_objective_gradient_and_hessian_with_augmentation():
    objective, A, sub = linear_objective()
    rng = np.random.default_rng(9)
    w = rng.uniform(0.5, 2.0, 6)
    aug = Augmentation(w, rng.standard_normal(6), rng.standard_normal(6), 3.0)
    objective = LeastSquaresObjective([sub], sub.prior, 1, aug)
    x = rng.standard_normal(6)

    hessian = A.T @ A + 0.5 * np.eye(6) + 3.0 * np.diag(w * w)
    expected_grad = A.T @ (A @ x - sub.y) + 0.5 * x + w * aug.u + 3.0 * w * w * (x - aug.z)

    np.testing.assert_allclose(objective.gradient(x), expected_grad, rtol=1e-10)
    np.testing.assert_allclose(objective.hessian_apply(x, x), hessian @ x, rtol=1e-10)
    np.testing.assert_allclose(objective.hessian_diag(x), np.diag(hessian), rtol=1e-10)
    # the normal equations are solved by the stationary point
    x_star = np.linalg.solve(hessian, objective.normal_rhs())
    np.testing.assert_allclose(objective.gradient(x_star), 0.0, atol=1e-9)


def test_gauss_newton_solves_linear_problem_in_one_step():
    objective, A, sub = linear_objective()
    expected = np.linalg.solve(A.T @ A + 0.5 * np.eye(6), A.T @ sub.y)

    x, trace = gauss_newton(objective, np.zeros(6), SolverConfig(max_outer=5, pcg_tol=1e-12))

    np.testing.assert_allclose(x, expected, rtol=1e-8, atol=1e-10)
    assert trace.records[0].iter == 0
    assert trace.records[1].step == 1.0
    assert trace.status == SolverStatus.CONVERGED


def test_gauss_newton_stops_at_an_optimal_start():
    prior = PriorSpec.smallness(5, 1.0)
    sub = Subproblem(identity_operator(5), np.ones(5), NoiseCov.identity(5), prior)
    objective = LeastSquaresObjective([sub], prior)

    x, trace = gauss_newton(objective, np.full(5, 0.5))

    np.testing.assert_array_equal(x, np.full(5, 0.5))
    assert len(trace) == 1
    assert trace.status == SolverStatus.CONVERGED


def test_gauss_newton_decreases_nonlinear_objective():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((15, 5)) / np.sqrt(15)
    truth = rng.standard_normal(5)
    operator = toy_nonlinear_operator(MatrixOperator(A), 0.1)
    prior = PriorSpec.smallness(5, 1e-3)
    sub = Subproblem(operator, operator.apply(truth), NoiseCov.identity(15), prior)
    objective = LeastSquaresObjective([sub], prior)

    x, trace = gauss_newton(objective, np.zeros(5), SolverConfig(max_outer=20), truth=truth)

    values = trace.objective_values
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert trace.last.relerr < trace.records[0].relerr
    assert trace.last.relerr < 0.05


def test_gauss_newton_reaches_a_stationary_point_on_the_toy_problem():
    rng = np.random.default_rng(16)
    A = rng.standard_normal((32, 16)) / np.sqrt(32)
    truth = 0.5 * rng.standard_normal(16)
    operator = toy_nonlinear_operator(MatrixOperator(A), 0.1)
    prior = PriorSpec.smallness(16, 1e-2)
    sub = Subproblem(operator, operator.apply(truth), NoiseCov.identity(32), prior)
    objective = LeastSquaresObjective([sub], prior)

    x, trace = gauss_newton(objective, np.zeros(16), SolverConfig(max_outer=30, pcg_tol=1e-12))

    assert trace.last.gradnorm <= 1e-6
    assert np.linalg.norm(objective.gradient(x)) <= 1e-6


def test_nlcg_beta_formula():
    p = np.array([1.0, 0.0])
    d = np.array([2.0, 1.0])
    g = np.array([0.5, -1.0])

    expected = (d - 2.0 * p * 5.0 / 2.0) @ g / 2.0

    assert nlcg_beta(p, d, g) == pytest.approx(expected)
    assert nlcg_beta(p, np.array([0.0, 1.0]), g) is None


def test_nlcg_records_beta_from_the_update_formula():
    objective, _, _ = linear_objective(seed=11)
    x0 = np.zeros(6)

    _, trace = nlcg(objective, x0, SolverConfig(max_outer=3))

    g0 = objective.gradient(x0)
    p0 = -g0
    x1 = x0 + trace.records[1].step * p0
    g1 = objective.gradient(x1)
    d = g1 - g0
    expected = float((d - 2.0 * p0 * float(d @ d) / float(p0 @ d)) @ g1) / float(p0 @ d)
    assert trace.records[1].beta == pytest.approx(expected, rel=1e-10)


def test_nlcg_with_zero_beta_is_steepest_descent():
    objective, _, _ = linear_objective(seed=12)
    cfg = SolverConfig(max_outer=4)

    x, trace = nlcg(objective, np.zeros(6), cfg, beta_zero=True)

    manual = np.zeros(6)
    for _ in range(len(trace) - 1):
        g = objective.gradient(manual)
        gamma = armijo_linesearch(objective.value, manual, -g, g, cfg.armijo_c, cfg.linesearch_max)
        manual = manual - gamma * g
    np.testing.assert_allclose(x, manual, rtol=1e-12, atol=1e-14)
    assert all(record.beta == 0.0 for record in trace.records[1:])


def test_nlcg_converges_on_linear_problem():
    objective, A, sub = linear_objective(seed=13, scale=1.0 / np.sqrt(12))
    expected = np.linalg.solve(A.T @ A + 0.5 * np.eye(6), A.T @ sub.y)

    x, trace = nlcg(objective, np.zeros(6), SolverConfig(max_outer=500, grad_tol=1e-9))

    np.testing.assert_allclose(x, expected, rtol=1e-5, atol=1e-6)
    assert trace.objective_values[-1] < trace.objective_values[0]


def test_nlcg_reaches_the_dense_optimum_in_fifty_dimensions():
    objective, A, sub = linear_objective(seed=50, rows=60, n=50, scale=1.0 / np.sqrt(60))
    optimum = np.linalg.solve(A.T @ A + 0.5 * np.eye(50), A.T @ sub.y)

    x, _ = nlcg(objective, np.zeros(50), SolverConfig(max_outer=2000, grad_tol=1e-9))

    assert objective.value(x) - objective.value(optimum) <= 1e-6
    assert objective.value(x) >= objective.value(optimum) - 1e-12


def test_trace_rejects_non_increasing_iterations():
    trace = IterTrace()
    trace.append(IterRecord(0, 0.0, 1.0, 0.0, float("nan"), 1.0))

    with pytest.raises(ValueError):
        trace.append(IterRecord(0, 0.0, 1.0, 0.0, float("nan"), 1.0))


def test_trace_csv_layout(tmp_path):
    trace = IterTrace(status=SolverStatus.CONVERGED)
    trace.append(IterRecord(0, 0.5, 2.0, 1.0, 0.25, 3.0))
    path = tmp_path / "trace.csv"

    trace.write_csv(path, ["seed=1"])

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[:3] == ["# seed=1", "# status=converged", ",".join(TRACE_HEADER)]
    assert lines[3] == "0,0.5,2.0,1.0,0.25,3.0"


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_outer=0)
    with pytest.raises(ValueError):
        SolverConfig(armijo_c=1.5)

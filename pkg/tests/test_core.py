import numpy as np
import pytest
import scipy.sparse as sp

from uqadmm.config import Config
from uqadmm.core import (
    DIFFUSION_SHIFT,
    ConsensusState,
    DiagonalWeight,
    DimensionMismatchError,
    NoiseCov,
    OracleSizeError,
    PriorSpec,
    Subproblem,
    as_model_vector,
    condition_number,
    dense_map_estimate,
    dense_posterior_covariance,
    gradient_stencil,
    misfit,
    misfit_gradient,
    regularizer,
    relative_error,
    relative_residual,
)
from uqadmm.operators import MatrixOperator, identity_operator, toy_nonlinear_operator


def central_difference(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2 * h)
    return grad


def test_noise_covariance_must_be_positive():
    with pytest.raises(ValueError):
        NoiseCov(np.array([1.0, 0.0]))


def test_subproblem_dimension_checks():
    prior = PriorSpec.smallness(3, 1.0)
    with pytest.raises(DimensionMismatchError):
        Subproblem(MatrixOperator(np.eye(3)), np.zeros(4), NoiseCov.identity(4), prior)
    with pytest.raises(DimensionMismatchError):
        Subproblem(MatrixOperator(np.eye(3)), np.zeros(3), NoiseCov.identity(3), prior,
                   DiagonalWeight.identity(2))


def test_subproblem_defaults_to_identity_weight():
    sub = Subproblem(identity_operator(3), np.ones(3), NoiseCov.identity(3), PriorSpec.smallness(3, 1.0))

    np.testing.assert_array_equal(sub.weight.diag, np.ones(3))


def test_weights_are_clamped(monkeypatch):
    monkeypatch.setattr(Config, "WEIGHT_FLOOR", 1e-3)
    monkeypatch.setattr(Config, "WEIGHT_CAP", 10.0)

    weight = DiagonalWeight.clamped(np.array([1e-9, 1.0, 1e9]))

    np.testing.assert_array_equal(weight.diag, [1e-3, 1.0, 10.0])


def test_as_model_vector_rejects_non_finite():
    with pytest.raises(ValueError):
        as_model_vector([1.0, np.nan])
    with pytest.raises(DimensionMismatchError):
        as_model_vector([1.0, 2.0], n=3)


def test_gradient_stencil_shapes():
    assert gradient_stencil((5,)).shape == (4, 5)
    assert gradient_stencil((3, 4)).shape == (3 * 3 + 2 * 4, 12)


def test_diffusion_prior_diagonal_matches_dense_hessian():
    prior = PriorSpec.diffusion((4, 5), alpha=0.3)
    dense = prior.precision_matrix() - DIFFUSION_SHIFT * np.eye(20)

    np.testing.assert_allclose(prior.hessian_diag(), np.diag(dense), rtol=1e-12)
    v = np.random.default_rng(0).standard_normal(20)
    np.testing.assert_allclose(prior.hessian_apply(v), dense @ v, rtol=1e-12, atol=1e-14)


def test_misfit_of_exact_data_is_zero():
    A = np.arange(12, dtype=float).reshape(4, 3)
    x = np.array([1.0, -1.0, 2.0])
    sub = Subproblem(MatrixOperator(A), A @ x, NoiseCov.identity(4), PriorSpec.smallness(3, 1.0))

    assert misfit(sub, x) == 0.0


@pytest.mark.parametrize("variance, expected", [(1.0, 2.0), (4.0, 0.5)])
def test_misfit_hand_values(variance, expected):
    sub = Subproblem(identity_operator(1), np.zeros(1), NoiseCov(np.array([variance])),
                     PriorSpec.smallness(1, 1.0))

    assert misfit(sub, np.array([2.0])) == expected


@pytest.mark.parametrize("c", [0.25, 3.0, 1e4])
def test_scaling_the_noise_variance_scales_the_misfit(c):
    rng = np.random.default_rng(4)
    A = rng.standard_normal((6, 4))
    variance = rng.uniform(0.5, 2.0, 6)
    y = rng.standard_normal(6)
    x = rng.standard_normal(4)
    prior = PriorSpec.smallness(4, 1.0)

    base = misfit(Subproblem(MatrixOperator(A), y, NoiseCov(variance), prior), x)
    scaled = misfit(Subproblem(MatrixOperator(A), y, NoiseCov(c * variance), prior), x)

    assert scaled == pytest.approx(base / c, rel=1e-12)


def test_misfit_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((7, 5))
    operator = toy_nonlinear_operator(MatrixOperator(A), 0.2)
    sub = Subproblem(operator, rng.standard_normal(7), NoiseCov(rng.uniform(0.5, 2.0, 7)),
                     PriorSpec.smallness(5, 0.1))
    x = rng.standard_normal(5)

    expected = central_difference(lambda v: misfit(sub, v), x)

    np.testing.assert_allclose(misfit_gradient(sub, x), expected, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("kind", ["smallness", "diffusion"])
def test_regularizer_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(2)
    if kind == "smallness":
        prior = PriorSpec.smallness(6, 0.7, x_ref=rng.standard_normal(6))
    else:
        prior = PriorSpec.diffusion((2, 3), 0.7)
    x = rng.standard_normal(6)

    expected = central_difference(lambda v: regularizer(prior, v)[0], x)

    np.testing.assert_allclose(regularizer(prior, x)[1], expected, rtol=1e-5, atol=1e-8)


def test_dense_map_of_identity_problem():
    y = np.array([1.0, 2.0, -3.0, 0.5])
    prior = PriorSpec.smallness(4, 1e-2)
    sub = Subproblem(identity_operator(4), y, NoiseCov.identity(4), prior)

    np.testing.assert_allclose(dense_map_estimate([sub], prior), y / 1.01, rtol=1e-12)


def test_prior_count_scales_the_regularizer():
    y = np.array([2.0, 4.0])
    prior = PriorSpec.smallness(2, 1.0)
    subs = [Subproblem(identity_operator(2), y, NoiseCov.identity(2), prior) for _ in range(3)]

    # 3 copies of the data against 3 copies of the prior
    np.testing.assert_allclose(dense_map_estimate(subs, prior, prior_count=3), y / 2.0, rtol=1e-12)


def test_dense_posterior_covariance_identity():
    covariance = dense_posterior_covariance(np.eye(3), NoiseCov.identity(3), PriorSpec.smallness(3, 1.0))

    np.testing.assert_allclose(covariance, 0.5 * np.eye(3), atol=1e-14)


def test_dense_posterior_covariance_without_data_is_the_prior():
    covariance = dense_posterior_covariance(np.zeros((3, 4)), NoiseCov.identity(3), PriorSpec.smallness(4, 2.5))

    np.testing.assert_allclose(covariance, np.eye(4) / 2.5, rtol=1e-14)


def test_dense_posterior_covariance_matches_a_plain_inverse():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((7, 5))
    variance = rng.uniform(0.5, 2.0, 7)

    covariance = dense_posterior_covariance(A, NoiseCov(variance), PriorSpec.smallness(5, 0.3))

    expected = np.linalg.inv(A.T @ np.diag(1.0 / variance) @ A + 0.3 * np.eye(5))
    np.testing.assert_allclose(covariance, expected, rtol=1e-10, atol=1e-14)
    np.testing.assert_array_equal(covariance, covariance.T)
    assert np.linalg.eigvalsh(covariance).min() > 0.0


def test_dense_oracles_refuse_large_problems(monkeypatch):
    monkeypatch.setattr(Config, "ORACLE_CAP", 3)

    with pytest.raises(OracleSizeError):
        dense_posterior_covariance(np.eye(4), NoiseCov.identity(4), PriorSpec.smallness(4, 1.0))


def test_relative_metrics():
    truth = np.array([3.0, 4.0])
    sub = Subproblem(identity_operator(2), truth, NoiseCov.identity(2), PriorSpec.smallness(2, 1.0))

    assert relative_error(np.zeros(2), truth) == pytest.approx(1.0)
    assert np.isnan(relative_error(truth, None))
    assert relative_residual([sub], truth) == 0.0


def test_condition_number():
    assert condition_number(np.eye(5)) == pytest.approx(1.0, abs=1e-8)
    assert condition_number(sp.identity(5, format="csr")) == pytest.approx(1.0, abs=1e-8)
    assert condition_number(np.zeros((3, 2))) == float("inf")


def test_condition_number_above_cap(monkeypatch):
    monkeypatch.setattr(Config, "ORACLE_CAP", 2)

    assert condition_number(np.eye(3)) is None


def test_consensus_state_initial():
    state = ConsensusState.initial(np.ones(3), n_sub=2, rho=5.0)

    assert state.n_sub == 2
    assert state.staleness.tolist() == [0, 0]
    state.x[0][0] = 9.0
    assert state.z[0] == 1.0

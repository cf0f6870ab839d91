import numpy as np
import pytest
import scipy.sparse as sp

from uqadmm.config import ConfigError, RunConfig
from uqadmm.generators import AVAILABLE_GENERATORS, UnknownGeneratorError, get_problem_generator
from uqadmm.generators.base import noise_variance
from uqadmm.operators import quadrant_indices, tomo_ray_operator, write_matrix_market


def test_unknown_generator_raises():
    with pytest.raises(UnknownGeneratorError):
        get_problem_generator("seismic")


def test_registry_lists_every_generator():
    assert sorted(AVAILABLE_GENERATORS) == ["deblur", "identity_quadrants", "mtx", "tomo"]


def test_identity_quadrants_observe_each_pixel_once():
    problem = get_problem_generator("identity_quadrants").build(RunConfig(grid_n=16))

    assert problem.n_sub == 4
    assert problem.image_shape == (16, 16)
    assert [sub.operator.n_out for sub in problem.subproblems] == [64] * 4
    stacked = sum(sub.operator.apply_transpose(sub.y) for sub in problem.subproblems)
    np.testing.assert_array_equal(stacked, problem.truth)
    assert all(np.all(sub.noise.diag == 1.0) for sub in problem.subproblems)


def test_identity_quadrants_reject_row_blocks():
    with pytest.raises(ValueError):
        get_problem_generator("identity_quadrants").build(RunConfig(grid_n=16, splitting="row_blocks"))


def test_deblur_noise_is_seeded():
    generator = get_problem_generator("deblur")

    first = generator.build(RunConfig(problem="deblur", grid_n=16, seed=1))
    second = generator.build(RunConfig(problem="deblur", grid_n=16, seed=1))
    other = generator.build(RunConfig(problem="deblur", grid_n=16, seed=2))

    np.testing.assert_array_equal(first.subproblems[0].y, second.subproblems[0].y)
    assert not np.array_equal(first.subproblems[0].y, other.subproblems[0].y)
    assert first.noise_level == 0.01


def test_deblur_splittings():
    generator = get_problem_generator("deblur")

    quadrants = generator.build(RunConfig(problem="deblur", grid_n=16))
    rows = generator.build(RunConfig(problem="deblur", grid_n=16, splitting="row_blocks", n_splits=3))

    assert [s.operator.n_out for s in quadrants.subproblems] == [64] * 4
    assert [s.operator.n_out for s in rows.subproblems] == [86, 85, 85]
    with pytest.raises(ValueError):
        generator.build(RunConfig(problem="deblur", grid_n=16, n_splits=3))


def test_tomo_quadrants_cover_every_ray_once():
    cfg = RunConfig(problem="tomo", grid_n=16, n_angles=8, noise_level=0.0)
    problem = get_problem_generator("tomo").build(cfg)
    full = tomo_ray_operator(16, 8, 16).to_dense()

    assert [s.operator.n_out for s in problem.subproblems] == [32] * 4
    order = np.concatenate(quadrant_indices(16, 8))
    np.testing.assert_array_equal(np.sort(order), np.arange(128))
    stacked = np.vstack([s.operator.to_dense() for s in problem.subproblems])
    np.testing.assert_array_equal(stacked, full[order])
    # first quadrant: first half of the angles, first half of the detectors
    assert list(order[:8]) == list(range(8))


def test_tomo_row_blocks_are_contiguous_angle_sectors():
    cfg = RunConfig(problem="tomo", grid_n=16, n_angles=8, splitting="row_blocks", noise_level=0.0)
    problem = get_problem_generator("tomo").build(cfg)
    full = tomo_ray_operator(16, 8, 16).to_dense()

    assert [s.operator.n_out for s in problem.subproblems] == [32] * 4
    np.testing.assert_array_equal(problem.subproblems[1].operator.to_dense(), full[32:64])


def test_tomo_quadrants_need_four_subproblems():
    with pytest.raises(ValueError):
        get_problem_generator("tomo").build(RunConfig(problem="tomo", grid_n=16, n_angles=8, n_splits=3))


def test_diffusion_prior_follows_the_image_grid():
    problem = get_problem_generator("tomo").build(
        RunConfig(problem="tomo", grid_n=16, n_angles=4, prior="diffusion", alpha=0.5)
    )

    prior = problem.subproblems[0].prior
    assert prior.kind == "diffusion"
    assert prior.stencil.shape == (2 * 16 * 15, 256)


def test_unknown_splitting_and_prior():
    with pytest.raises(ValueError, match="splitting"):
        get_problem_generator("deblur").build(RunConfig(grid_n=16, splitting="random"))
    with pytest.raises(ValueError, match="prior"):
        get_problem_generator("deblur").build(RunConfig(grid_n=16, prior="tv"))


def test_mtx_needs_a_matrix():
    with pytest.raises(ConfigError):
        get_problem_generator("mtx").build(RunConfig(problem="mtx"))


def test_mtx_is_noiseless_row_blocks(tmp_path):
    path = tmp_path / "tall.mtx"
    write_matrix_market(path, sp.eye(12, 5, format="csr") + sp.eye(12, 5, k=-3, format="csr"))

    problem = get_problem_generator("mtx").build(RunConfig(problem="mtx", matrix=str(path), n_splits=3))

    assert problem.name == "tall"
    assert [s.operator.n_out for s in problem.subproblems] == [4, 4, 4]
    assert problem.noise_level == 0.0
    stacked = np.concatenate([s.y for s in problem.subproblems])
    np.testing.assert_allclose(stacked, (sp.eye(12, 5) + sp.eye(12, 5, k=-3)) @ problem.truth)


def test_noise_variance_scales_with_the_data():
    y = np.full(4, 2.0)

    assert noise_variance(y, 0.0) == 1.0
    assert noise_variance(y, 0.1) == pytest.approx(0.04)

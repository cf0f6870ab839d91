import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from uqadmm.operators import (
    GridImage,
    IdentityBlock,
    MatrixOperator,
    OperatorError,
    blur_truth,
    block_sizes,
    gaussian_blur_operator,
    identity_partition,
    quadrant_rows,
    read_image_csv,
    read_pgm,
    row_partition,
    save_image,
    shepp_phantom,
    tomo_ray_operator,
    toy_nonlinear_operator,
    write_pgm,
)
from uqadmm.operators.imaging import blur_toeplitz
from uqadmm.operators.partition import quadrant_indices


@given(m=st.integers(min_value=1, max_value=500), data=st.data())
def test_block_sizes_cover_rows_evenly(m, data):
    N = data.draw(st.integers(min_value=1, max_value=m))

    sizes = block_sizes(m, N)

    assert sum(sizes) == m
    assert max(sizes) - min(sizes) <= 1
    assert sizes == sorted(sizes, reverse=True)


def test_block_sizes_rejects_more_blocks_than_rows():
    with pytest.raises(OperatorError):
        block_sizes(3, 4)


@settings(max_examples=25)
@given(half_w=st.integers(min_value=1, max_value=12), half_h=st.integers(min_value=1, max_value=12))
def test_quadrants_partition_every_pixel_once(half_w, half_h):
    width, height = 2 * half_w, 2 * half_h

    blocks = identity_partition(width, height)

    indices = np.concatenate([idx for _, idx in blocks])
    assert sorted(indices.tolist()) == list(range(width * height))
    assert all(op.n_out == half_w * half_h and op.n_in == width * height for op, _ in blocks)


def test_two_by_two_quadrants_pick_single_pixels():
    blocks = identity_partition(2, 2)
    x = np.array([10.0, 20.0, 30.0, 40.0])

    assert [op.apply(x)[0] for op, _ in blocks] == [10.0, 20.0, 30.0, 40.0]
    np.testing.assert_array_equal(blocks[0][0].to_dense(), [[1.0, 0.0, 0.0, 0.0]])


def test_odd_image_cannot_be_split_into_quadrants():
    with pytest.raises(OperatorError):
        quadrant_indices(3, 4)
    with pytest.raises(OperatorError):
        identity_partition(4, 4, N=3)


def test_identity_block_transpose_scatters():
    block = IdentityBlock([1, 3], 4)

    np.testing.assert_array_equal(block.apply_transpose(np.array([5.0, 6.0])), [0.0, 5.0, 0.0, 6.0])
    np.testing.assert_array_equal(block.normal_diag(np.zeros(4), np.array([2.0, 3.0])), [0, 2.0, 0, 3.0])


def test_row_partition_keeps_rows_in_order():
    A = MatrixOperator(np.arange(20.0).reshape(10, 2))
    y = np.arange(10.0)

    blocks = row_partition(A, y, 3)

    assert [op.n_out for op, _ in blocks] == [4, 3, 3]
    np.testing.assert_array_equal(np.vstack([op.to_dense() for op, _ in blocks]), A.to_dense())
    np.testing.assert_array_equal(np.concatenate([yj for _, yj in blocks]), y)


def test_quadrant_rows_split_by_output_pixel():
    blur = gaussian_blur_operator(4, 2, 0.7)
    y = np.arange(16.0)

    blocks = quadrant_rows(blur, y, 4, 4)

    assert [op.n_out for op, _ in blocks] == [4, 4, 4, 4]
    np.testing.assert_array_equal(blocks[1][1], [2.0, 3.0, 6.0, 7.0])


def test_blur_is_symmetric_and_banded():
    T = blur_toeplitz(8, 3, 0.7)

    np.testing.assert_array_equal(T, T.T)
    assert T[0, 3] == 0.0 and T[0, 2] > 0.0
    A = gaussian_blur_operator(8, 3, 0.7).to_dense()
    np.testing.assert_allclose(A, np.kron(T, T))


def test_blur_parameters_are_validated():
    with pytest.raises(OperatorError):
        blur_toeplitz(8, 0, 0.7)
    with pytest.raises(OperatorError):
        blur_toeplitz(8, 3, 0.0)


def test_blur_matches_direct_convolution():
    grid_n, band, sigma = 9, 3, 1.2
    rng = np.random.default_rng(12)
    image = rng.standard_normal((grid_n, grid_n))

    def g(k):
        return np.exp(-k ** 2 / (2 * sigma ** 2)) / (sigma * np.sqrt(2 * np.pi)) if abs(k) < band else 0.0

    expected = np.zeros_like(image)
    for i in range(grid_n):
        for j in range(grid_n):
            for p in range(grid_n):
                for q in range(grid_n):
                    expected[i, j] += g(i - p) * g(j - q) * image[p, q]

    blurred = gaussian_blur_operator(grid_n, band, sigma).apply(image.ravel())

    np.testing.assert_allclose(blurred.reshape(grid_n, grid_n), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("build", [
    lambda rng: gaussian_blur_operator(6, 2, 0.8),
    lambda rng: MatrixOperator(rng.standard_normal((7, 5))),
    lambda rng: MatrixOperator(sp.random(9, 6, density=0.4, random_state=3, format="csr")),
    lambda rng: IdentityBlock(np.array([4, 0, 7]), 9),
])
def test_linear_operators_satisfy_the_adjoint_identity(build):
    rng = np.random.default_rng(21)
    operator = build(rng)
    x = rng.standard_normal(operator.n_in)
    w = rng.standard_normal(operator.n_out)

    assert operator.apply(x) @ w == pytest.approx(x @ operator.apply_transpose(w), rel=1e-12, abs=1e-12)


def test_axis_aligned_rays_cross_every_cell_once():
    grid_n = 8
    A = tomo_ray_operator(grid_n, 2, grid_n).to_dense()

    np.testing.assert_allclose(A.sum(axis=1), np.full(2 * grid_n, float(grid_n)), rtol=1e-12)
    np.testing.assert_allclose(A.sum(axis=0), np.full(grid_n * grid_n, 2.0), rtol=1e-12)


def test_oblique_rays_stay_inside_the_grid():
    grid_n = 10
    A = tomo_ray_operator(grid_n, 12, 15).to_dense()

    assert A.shape == (12 * 15, grid_n * grid_n)
    assert np.all(A >= 0.0)
    assert np.all(A.sum(axis=1) <= np.sqrt(2.0) * grid_n + 1e-9)
    assert np.all(A <= np.sqrt(2.0) + 1e-12)


def test_central_ray_length_is_the_chord():
    grid_n = 8
    # one detector sits on the centre line, angles are 0, 30, 60, ... degrees
    A = tomo_ray_operator(grid_n, 6, 1).to_dense()

    assert A[1].sum() == pytest.approx(grid_n / np.cos(np.pi / 6), rel=1e-12)
    assert A[2].sum() == pytest.approx(grid_n / np.sin(np.pi / 3), rel=1e-12)


def test_diagonal_ray_crosses_the_anti_diagonal_cells():
    grid_n = 8
    A = tomo_ray_operator(grid_n, 4, 1).to_dense()

    ray = A[1].reshape(grid_n, grid_n)
    diagonal = np.fliplr(np.eye(grid_n, dtype=bool))
    np.testing.assert_allclose(ray[diagonal], np.full(grid_n, np.sqrt(2.0)), rtol=1e-9)
    np.testing.assert_allclose(ray[~diagonal], 0.0, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 16))
def test_tomography_adjoint_identity(seed):
    operator = tomo_ray_operator(6, 7, 9)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(operator.n_in)
    w = rng.standard_normal(operator.n_out)

    assert operator.apply(x) @ w == pytest.approx(x @ operator.apply_transpose(w), rel=1e-10, abs=1e-10)


def test_phantom_and_blur_truth_are_bounded_images():
    for image in (shepp_phantom(32), blur_truth(32)):
        assert (image.width, image.height) == (32, 32)
        assert image.pixels.min() >= 0.0 and image.pixels.max() <= 1.0
        assert image.pixels.max() > 0.0


@pytest.mark.parametrize("grid_n", [16, 32, 64])
def test_test_images_vanish_on_the_boundary_ring(grid_n):
    ring = grid_n // 16
    for image in (shepp_phantom(grid_n), blur_truth(grid_n)):
        pixels = image.as_array()
        border = np.ones_like(pixels, dtype=bool)
        border[ring:grid_n - ring, ring:grid_n - ring] = False
        assert np.all(pixels[border] == 0.0)
        assert pixels.max() > 0.0


def test_small_grids_are_rejected_for_test_images():
    with pytest.raises(OperatorError):
        shepp_phantom(8)


def test_grid_image_checks_pixel_count():
    with pytest.raises(OperatorError):
        GridImage(3, 3, np.zeros(8))


def test_pgm_keeps_sixteen_bit_precision(tmp_path):
    image = shepp_phantom(16)
    path = tmp_path / "phantom.pgm"

    write_pgm(path, image, ["grid_n=16"])
    loaded = read_pgm(path)

    assert (loaded.width, loaded.height) == (16, 16)
    np.testing.assert_allclose(loaded.pixels, image.pixels, atol=1.0 / 65535)


def test_save_image_writes_pgm_and_csv(tmp_path):
    image = GridImage(4, 2, np.linspace(0.0, 1.0, 8))

    save_image(tmp_path / "x", image, ["seed=0"])

    assert (tmp_path / "x.pgm").is_file()
    np.testing.assert_array_equal(read_image_csv(tmp_path / "x.csv").pixels, image.pixels)


def test_image_files_are_byte_identical_across_runs(tmp_path):
    write_pgm(tmp_path / "a.pgm", shepp_phantom(32), ["grid_n=32", "seed=0"])
    write_pgm(tmp_path / "b.pgm", shepp_phantom(32), ["grid_n=32", "seed=0"])

    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()


def test_image_headers_accept_non_ascii_paths(tmp_path):
    image = GridImage(4, 2, np.linspace(0.0, 1.0, 8))

    save_image(tmp_path / "x", image, ["out=/tmp/данные", "problem=débruitage"])

    np.testing.assert_allclose(read_pgm(tmp_path / "x.pgm").pixels, image.pixels, atol=1.0 / 65535)
    np.testing.assert_array_equal(read_image_csv(tmp_path / "x.csv").pixels, image.pixels)


def test_toy_operator_reduces_to_linear_when_q_is_zero():
    base = MatrixOperator(np.array([[1.0, 2.0], [0.0, 1.0]]))
    linear = toy_nonlinear_operator(base, 0.0)
    curved = toy_nonlinear_operator(base, 0.5)
    x = np.array([1.0, 1.0])

    assert linear.is_linear and not curved.is_linear
    np.testing.assert_array_equal(linear.apply(x), [3.0, 1.0])
    np.testing.assert_array_equal(curved.apply(x), [3.0 + 4.5, 1.5])
    np.testing.assert_array_equal(curved.jacobian_apply(x, np.array([1.0, 0.0])), [4.0, 0.0])

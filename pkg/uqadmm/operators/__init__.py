"""
Forward operators, test-problem generators, splittings and matrix file ingestion
"""
from .base import (
    ForwardOperator,
    IdentityBlock,
    MatrixOperator,
    OperatorError,
    ToyNonlinearOperator,
    identity_operator,
    toy_nonlinear_operator,
)
from .imaging import (
    GridImage,
    blur_truth,
    gaussian_blur_operator,
    read_image_csv,
    read_pgm,
    save_image,
    shepp_phantom,
    tomo_ray_operator,
    write_image_csv,
    write_pgm,
)
from .matrix_market import (
    MatrixMarketError,
    MatrixProblem,
    load_matrix_market,
    matrix_collection,
    read_manifest,
    read_matrix_market,
    write_matrix_market,
)
from .partition import block_sizes, identity_partition, quadrant_indices, quadrant_rows, row_partition

__all__ = [
    'ForwardOperator',
    'IdentityBlock',
    'MatrixOperator',
    'OperatorError',
    'ToyNonlinearOperator',
    'identity_operator',
    'toy_nonlinear_operator',
    'GridImage',
    'blur_truth',
    'gaussian_blur_operator',
    'read_image_csv',
    'read_pgm',
    'save_image',
    'shepp_phantom',
    'tomo_ray_operator',
    'write_image_csv',
    'write_pgm',
    'MatrixMarketError',
    'MatrixProblem',
    'load_matrix_market',
    'matrix_collection',
    'read_manifest',
    'read_matrix_market',
    'write_matrix_market',
    'block_sizes',
    'identity_partition',
    'quadrant_indices',
    'quadrant_rows',
    'row_partition',
]

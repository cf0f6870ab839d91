"""
Data splittings: image quadrants for imaging problems, contiguous row blocks otherwise
"""
from typing import List, Tuple
import logging

import numpy as np

from .base import ForwardOperator, IdentityBlock, MatrixOperator, OperatorError

logger = logging.getLogger(__name__)


def quadrant_indices(width: int, height: int) -> List[np.ndarray]:
    """Row-major pixel indices of the top-left, top-right, bottom-left and bottom-right quadrants"""
    if width % 2 or height % 2:
        raise OperatorError(f"Quadrant splitting needs even image dimensions, got {width}x{height}")
    grid = np.arange(width * height).reshape(height, width)
    half_h, half_w = height // 2, width // 2
    return [
        grid[:half_h, :half_w].ravel(),
        grid[:half_h, half_w:].ravel(),
        grid[half_h:, :half_w].ravel(),
        grid[half_h:, half_w:].ravel(),
    ]


def identity_partition(width: int, height: int, N: int = 4) -> List[Tuple[IdentityBlock, np.ndarray]]:
    """Four row-selection operators I_j, one per image quadrant"""
    if N != 4:
        raise OperatorError(f"Quadrant splitting produces exactly 4 subproblems, got N={N}")
    n = width * height
    return [(IdentityBlock(indices, n), indices) for indices in quadrant_indices(width, height)]


def quadrant_rows(operator: MatrixOperator, y: np.ndarray, width: int, height: int):
    """
    Split the rows of an operator whose outputs form a row-major height x width
    grid (blurred pixels, or angle x detector rays) into the grid's quadrants
    """
    if operator.n_out != width * height:
        raise OperatorError(f"Operator has {operator.n_out} rows, not a {height}x{width} grid")
    blocks = []
    for indices in quadrant_indices(width, height):
        blocks.append((MatrixOperator(operator.matrix[indices]), np.asarray(y)[indices]))
    return blocks


def block_sizes(m: int, N: int) -> List[int]:
    """Sizes floor(m/N) or ceil(m/N); remainder rows go one per block from the first block"""
    if N < 1 or N > m:
        raise OperatorError(f"Cannot split {m} rows into {N} blocks")
    base, remainder = divmod(m, N)
    return [base + 1 if j < remainder else base for j in range(N)]


def row_partition(A: ForwardOperator, y: np.ndarray, N: int) -> List[Tuple[MatrixOperator, np.ndarray]]:
    """Contiguous row blocks (A_j, y_j) of a linear operator and its data"""
    if not isinstance(A, MatrixOperator):
        raise OperatorError(f"Row partitioning needs a matrix operator, got {A.describe()}")
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != A.n_out:
        raise OperatorError(f"Data length {y.shape[0]} does not match operator rows {A.n_out}")

    blocks = []
    start = 0
    for size in block_sizes(A.n_out, N):
        blocks.append((A.row_block(start, start + size), y[start:start + size]))
        start += size
    logger.debug("Row partition of %s rows into %s", A.n_out, [b[0].n_out for b in blocks])
    return blocks

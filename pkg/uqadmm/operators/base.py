"""
Base interface for forward operators
"""
from abc import ABC, abstractmethod
import logging

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class OperatorError(ValueError):
    """Raised for invalid operator construction parameters."""


class ForwardOperator(ABC):
    """Abstract base class for forward operators F: R^n_in -> R^n_out"""

    kind = "abstract"

    def __init__(self, n_in: int, n_out: int):
        self.n_in = int(n_in)
        self.n_out = int(n_out)

    @property
    def is_linear(self) -> bool:
        return True

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        """
        Evaluate the forward model

        Args:
            x: Model vector of length n_in

        Returns:
            np.ndarray: Predicted data of length n_out
        """

    @abstractmethod
    def jacobian_apply(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Action J(x) v of the Jacobian at the linearization point x"""

    @abstractmethod
    def jacobian_transpose_apply(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Action J(x)^T w of the transposed Jacobian"""

    @abstractmethod
    def normal_diag(self, x: np.ndarray, inv_noise: np.ndarray) -> np.ndarray:
        """
        Diagonal of J(x)^T diag(inv_noise) J(x)

        Used as the Jacobi preconditioner of the normal equations.
        """

    def to_dense(self) -> np.ndarray:
        raise OperatorError(f"{type(self).__name__} cannot be assembled densely")

    def describe(self) -> str:
        return f"{self.kind}({self.n_out}x{self.n_in})"


class MatrixOperator(ForwardOperator):
    """Linear operator backed by a dense array or a scipy sparse matrix"""

    def __init__(self, matrix):
        if sp.issparse(matrix):
            matrix = sp.csr_matrix(matrix, dtype=np.float64)
            self.kind = "sparse"
        else:
            matrix = np.asarray(matrix, dtype=np.float64)
            if matrix.ndim != 2:
                raise OperatorError("Dense operators need a 2-D matrix")
            self.kind = "dense"
        super().__init__(matrix.shape[1], matrix.shape[0])
        self.matrix = matrix
        self._transpose = matrix.T.tocsr() if sp.issparse(matrix) else matrix.T

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ x, dtype=np.float64)

    def apply_transpose(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(self._transpose @ v, dtype=np.float64)

    def jacobian_apply(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    def jacobian_transpose_apply(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.apply_transpose(w)

    def normal_diag(self, x: np.ndarray, inv_noise: np.ndarray) -> np.ndarray:
        if sp.issparse(self.matrix):
            squared = self.matrix.multiply(self.matrix)
            return np.asarray(squared.T @ inv_noise).ravel()
        return (self.matrix * self.matrix).T @ inv_noise

    def to_dense(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return np.array(self.matrix)

    def to_sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix)

    def row_block(self, start: int, stop: int) -> "MatrixOperator":
        return MatrixOperator(self.matrix[start:stop])


class IdentityBlock(MatrixOperator):
    """Row selection I_j picking ``indices`` out of an n-vector"""

    def __init__(self, indices, n: int):
        indices = np.asarray(indices, dtype=np.int64)
        rows = np.arange(indices.shape[0])
        selector = sp.csr_matrix(
            (np.ones(indices.shape[0]), (rows, indices)), shape=(indices.shape[0], n)
        )
        super().__init__(selector)
        self.kind = "identity_block"
        self.indices = indices

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64)[self.indices]

    def apply_transpose(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_in)
        out[self.indices] = v
        return out


class ToyNonlinearOperator(ForwardOperator):
    """F(x) = A x + q (A x)^2 with Jacobian (I + 2q diag(A x)) A"""

    kind = "toy_nonlinear"

    def __init__(self, base: MatrixOperator, q: float):
        if not base.is_linear:
            raise OperatorError("The toy nonlinear operator wraps a linear operator")
        super().__init__(base.n_in, base.n_out)
        self.base = base
        self.q = float(q)

    @property
    def is_linear(self) -> bool:
        return self.q == 0.0

    def _scale(self, x: np.ndarray) -> np.ndarray:
        return 1.0 + 2.0 * self.q * self.base.apply(x)

    def apply(self, x: np.ndarray) -> np.ndarray:
        ax = self.base.apply(x)
        return ax + self.q * ax * ax

    def jacobian_apply(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self._scale(x) * self.base.apply(v)

    def jacobian_transpose_apply(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.base.apply_transpose(self._scale(x) * w)

    def normal_diag(self, x: np.ndarray, inv_noise: np.ndarray) -> np.ndarray:
        scale = self._scale(x)
        return self.base.normal_diag(x, inv_noise * scale * scale)

    def to_dense(self) -> np.ndarray:
        if self.q != 0.0:
            return super().to_dense()
        return self.base.to_dense()


def toy_nonlinear_operator(A: ForwardOperator, q: float) -> ToyNonlinearOperator:
    """Wrap linear ``A`` in the quadratic toy model used to exercise Gauss-Newton."""

    if not isinstance(A, MatrixOperator):
        raise OperatorError(f"Expected a linear matrix operator, got {A.describe()}")
    return ToyNonlinearOperator(A, q)


def identity_operator(n: int) -> MatrixOperator:
    return MatrixOperator(sp.identity(n, format="csr"))

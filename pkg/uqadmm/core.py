"""Domain types, misfit/regularizer evaluation and dense posterior oracles."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .config import Config

if TYPE_CHECKING:  # pragma: no cover
    from .operators.base import ForwardOperator

logger = logging.getLogger(__name__)

ModelVector = np.ndarray
"""Length-n float64 vector: a model x, the consensus variable z or a dual u_j."""

# Shift that makes the diffusion precision alpha*L^T L positive definite.
DIFFUSION_SHIFT = 1e-8


class DimensionMismatchError(ValueError):
    """Raised when operator, data, noise or weight sizes disagree."""


class OracleSizeError(ValueError):
    """Raised when a dense routine is asked to handle more than the oracle cap."""


def as_model_vector(values, n: Optional[int] = None) -> ModelVector:
    """Return ``values`` as a finite float64 vector, optionally of length ``n``."""

    vector = np.asarray(values, dtype=np.float64).reshape(-1)
    if n is not None and vector.shape[0] != n:
        raise DimensionMismatchError(f"Expected a vector of length {n}, got {vector.shape[0]}")
    if not np.all(np.isfinite(vector)):
        raise ValueError("Model vectors must have finite entries")
    return vector


# ----------------------------------------------------------------------
# Domain types
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class NoiseCov:
    """Diagonal noise covariance Gamma_noise."""

    diag: np.ndarray

    def __post_init__(self) -> None:
        diag = np.asarray(self.diag, dtype=np.float64).reshape(-1)
        if diag.size and not np.all(diag > 0):
            raise ValueError("Noise variances must be strictly positive")
        object.__setattr__(self, "diag", diag)

    @classmethod
    def identity(cls, m: int) -> "NoiseCov":
        return cls(np.ones(m))

    @classmethod
    def constant(cls, m: int, variance: float) -> "NoiseCov":
        return cls(np.full(m, float(variance)))

    @property
    def size(self) -> int:
        return int(self.diag.shape[0])

    def whiten(self, residual: np.ndarray) -> np.ndarray:
        """Apply Gamma_noise^{-1}."""

        return residual / self.diag


def gradient_stencil(shape: Sequence[int]) -> sp.csr_matrix:
    """Forward-difference gradient L on a 1-D or row-major 2-D grid."""

    def diff(k: int) -> sp.csr_matrix:
        return sp.diags([-np.ones(k - 1), np.ones(k - 1)], [0, 1], shape=(k - 1, k), format="csr")

    if len(shape) == 1:
        return diff(int(shape[0]))
    height, width = (int(s) for s in shape)
    along_rows = sp.kron(sp.identity(height), diff(width))
    along_cols = sp.kron(diff(height), sp.identity(width))
    return sp.vstack([along_rows, along_cols]).tocsr()


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Gaussian prior: smallness (alpha*I precision) or diffusion (alpha*L^T L)."""

    kind: str
    alpha: float
    x_ref: ModelVector
    inv_cov_diag_approx: np.ndarray
    stencil: Optional[sp.csr_matrix] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in ("smallness", "diffusion"):
            raise ValueError(f"Unknown prior kind '{self.kind}'")
        if not self.alpha > 0:
            raise ValueError("Prior alpha must be positive")
        if not np.all(self.inv_cov_diag_approx > 0):
            raise ValueError("Prior precision diagonal must be positive")
        if self.kind == "diffusion" and self.stencil is None:
            raise ValueError("Diffusion priors need a gradient stencil")

    @classmethod
    def smallness(cls, n: int, alpha: float, x_ref: Optional[ModelVector] = None) -> "PriorSpec":
        ref = np.zeros(n) if x_ref is None else as_model_vector(x_ref, n)
        return cls("smallness", float(alpha), ref, np.full(n, float(alpha)))

    @classmethod
    def diffusion(
        cls, shape: Sequence[int], alpha: float, x_ref: Optional[ModelVector] = None
    ) -> "PriorSpec":
        stencil = gradient_stencil(shape)
        n = stencil.shape[1]
        ref = np.zeros(n) if x_ref is None else as_model_vector(x_ref, n)
        diag = float(alpha) * np.asarray(stencil.multiply(stencil).sum(axis=0)).ravel() + DIFFUSION_SHIFT
        return cls("diffusion", float(alpha), ref, diag, stencil)

    @property
    def size(self) -> int:
        return int(self.x_ref.shape[0])

    def hessian_apply(self, v: np.ndarray) -> np.ndarray:
        """Exact regularizer Hessian action: alpha*v or alpha*L^T L v."""

        if self.kind == "smallness":
            return self.alpha * v
        return self.alpha * (self.stencil.T @ (self.stencil @ v))

    def hessian_diag(self) -> np.ndarray:
        if self.kind == "smallness":
            return np.full(self.size, self.alpha)
        return self.inv_cov_diag_approx - DIFFUSION_SHIFT

    def precision_matrix(self) -> np.ndarray:
        """Dense Gamma_prior^{-1}; the diffusion kind carries a tiny shift to stay definite."""

        if self.kind == "smallness":
            return self.alpha * np.eye(self.size)
        dense = self.stencil.toarray()
        return self.alpha * dense.T @ dense + DIFFUSION_SHIFT * np.eye(self.size)

    def cov_sqrt_diag(self) -> np.ndarray:
        """Diagonal surrogate of Gamma_prior^{1/2}."""

        return 1.0 / np.sqrt(self.inv_cov_diag_approx)


@dataclass(frozen=True, eq=False)
class DiagonalWeight:
    """Positive diagonal consensus weight W_j."""

    diag: np.ndarray

    def __post_init__(self) -> None:
        diag = np.asarray(self.diag, dtype=np.float64).reshape(-1)
        if not np.all(diag > 0):
            raise ValueError("Consensus weights must be strictly positive")
        object.__setattr__(self, "diag", diag)

    @classmethod
    def identity(cls, n: int) -> "DiagonalWeight":
        return cls(np.ones(n))

    @classmethod
    def clamped(cls, values: np.ndarray) -> "DiagonalWeight":
        return cls(np.clip(values, Config.WEIGHT_FLOOR, Config.WEIGHT_CAP))

    @property
    def size(self) -> int:
        return int(self.diag.shape[0])

    @property
    def squared(self) -> np.ndarray:
        return self.diag * self.diag


@dataclass(eq=False)
class Subproblem:
    """One consensus term: forward operator, data, noise, prior and weight."""

    operator: "ForwardOperator"
    y: np.ndarray
    noise: NoiseCov
    prior: PriorSpec
    weight: Optional[DiagonalWeight] = None

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.operator.n_out != self.y.shape[0] or self.noise.size != self.y.shape[0]:
            raise DimensionMismatchError(
                f"Operator output {self.operator.n_out}, data {self.y.shape[0]} and "
                f"noise {self.noise.size} sizes disagree"
            )
        if self.prior.size != self.operator.n_in:
            raise DimensionMismatchError(
                f"Prior size {self.prior.size} does not match operator input {self.operator.n_in}"
            )
        if self.weight is None:
            self.weight = DiagonalWeight.identity(self.operator.n_in)
        elif self.weight.size != self.operator.n_in:
            raise DimensionMismatchError(
                f"Weight size {self.weight.size} does not match operator input {self.operator.n_in}"
            )

    @property
    def n(self) -> int:
        return self.operator.n_in

    def with_weight(self, weight: DiagonalWeight) -> "Subproblem":
        return Subproblem(self.operator, self.y, self.noise, self.prior, weight)


@dataclass
class ConsensusState:
    """Coordinator-owned ADMM state: z, cached locals, duals, rho and staleness."""

    z: ModelVector
    x: List[ModelVector]
    u: List[ModelVector]
    rho: float
    iter: int = 0
    staleness: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.staleness is None:
            self.staleness = np.zeros(len(self.x), dtype=int)

    @classmethod
    def initial(cls, x_ref: ModelVector, n_sub: int, rho: float) -> "ConsensusState":
        return cls(
            z=x_ref.copy(),
            x=[x_ref.copy() for _ in range(n_sub)],
            u=[np.zeros_like(x_ref) for _ in range(n_sub)],
            rho=float(rho),
        )

    @property
    def n_sub(self) -> int:
        return len(self.x)


# ----------------------------------------------------------------------
# Misfit and regularizer
# ----------------------------------------------------------------------
def _residual(sub: Subproblem, x: ModelVector) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != sub.n:
        raise DimensionMismatchError(f"Model length {x.shape[0]} does not match operator input {sub.n}")
    return sub.operator.apply(x) - sub.y


def misfit(sub: Subproblem, x: ModelVector) -> float:
    """Noise-weighted half squared residual Phi_j(x)."""

    residual = _residual(sub, x)
    return 0.5 * float(residual @ sub.noise.whiten(residual))


def misfit_gradient(sub: Subproblem, x: ModelVector) -> ModelVector:
    """J^T Gamma_noise^{-1} (F(x) - y)."""

    residual = _residual(sub, x)
    return sub.operator.jacobian_transpose_apply(x, sub.noise.whiten(residual))


def regularizer(prior: PriorSpec, x: ModelVector) -> Tuple[float, ModelVector]:
    """Return (R(x), grad R(x)) for the prior."""

    delta = np.asarray(x, dtype=np.float64) - prior.x_ref
    if prior.kind == "smallness":
        return 0.5 * prior.alpha * float(delta @ delta), prior.alpha * delta
    gradient = prior.stencil @ delta
    value = 0.5 * prior.alpha * float(gradient @ gradient)
    return value, prior.alpha * (prior.stencil.T @ gradient)


# ----------------------------------------------------------------------
# Dense oracles
# ----------------------------------------------------------------------
def _check_cap(n: int) -> None:
    if n > Config.ORACLE_CAP:
        raise OracleSizeError(f"Dense oracle refuses n={n} (cap {Config.ORACLE_CAP})")


def dense_posterior_covariance(A: np.ndarray, noise: NoiseCov, prior: PriorSpec) -> np.ndarray:
    """(A^T Gamma_noise^{-1} A + Gamma_prior^{-1})^{-1} by Cholesky factorization."""

    A = np.asarray(A, dtype=np.float64)
    _check_cap(A.shape[1])
    if A.shape[0] != noise.size:
        raise DimensionMismatchError("Matrix rows and noise size disagree")

    precision = A.T @ (A / noise.diag[:, None]) + prior.precision_matrix()
    factor = scipy.linalg.cho_factor(precision)
    covariance = scipy.linalg.cho_solve(factor, np.eye(A.shape[1]))
    return 0.5 * (covariance + covariance.T)


def dense_map_estimate(
    subproblems: Sequence[Subproblem], prior: PriorSpec, prior_count: int = 1
) -> ModelVector:
    """Minimizer of sum_j Phi_j + prior_count * R for linear forward operators.

    ``prior_count=1`` is the MAP point; ``prior_count=N`` is the solution of the
    consensus problem in which every local term carries its own regularizer.
    """

    n = prior.size
    _check_cap(n)
    lhs = np.zeros((n, n))
    rhs = np.zeros(n)
    for sub in subproblems:
        A = sub.operator.to_dense()
        lhs += A.T @ (A / sub.noise.diag[:, None])
        rhs += A.T @ sub.noise.whiten(sub.y)

    if prior.kind == "smallness":
        prior_hessian = prior.alpha * np.eye(n)
    else:
        dense = prior.stencil.toarray()
        prior_hessian = prior.alpha * dense.T @ dense
    lhs += prior_count * prior_hessian
    rhs += prior_count * (prior_hessian @ prior.x_ref)
    return scipy.linalg.solve(lhs, rhs, assume_a="sym")


def relative_error(x: ModelVector, truth: Optional[ModelVector]) -> float:
    """||x - x_true|| / ||x_true||, NaN when no truth is known."""

    if truth is None:
        return float("nan")
    return float(np.linalg.norm(x - truth) / np.linalg.norm(truth))


def relative_residual(subproblems: Sequence[Subproblem], x: ModelVector) -> float:
    """||A x - y|| / ||y|| over the stacked subproblem data."""

    num = 0.0
    den = 0.0
    for sub in subproblems:
        residual = sub.operator.apply(x) - sub.y
        num += float(residual @ residual)
        den += float(sub.y @ sub.y)
    return float(np.sqrt(num / den)) if den > 0 else float("nan")


def condition_number(A) -> Optional[float]:
    """2-norm condition number by dense SVD, or None above the oracle cap."""

    if sp.issparse(A):
        if A.shape[1] > Config.ORACLE_CAP:
            return None
        A = A.toarray()
    A = np.asarray(A, dtype=np.float64)
    if A.shape[1] > Config.ORACLE_CAP:
        return None
    singular = scipy.linalg.svdvals(A)
    if singular[-1] == 0.0:
        return float("inf")
    return float(singular[0] / singular[-1])

"""
Uncertainty weights from a low-rank approximation of each subproblem's posterior

For every subproblem the Gauss-Newton misfit Hessian is prior-conditioned,
its dominant eigenpairs are extracted (Lanczos or a dense eigensolver), and the
Sherman-Morrison-Woodbury form of the posterior covariance yields a diagonal
whose inverse becomes the consensus weight W_j.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence
import logging
import time

import numpy as np
import scipy.linalg

from .config import Config
from .core import DiagonalWeight, ModelVector, OracleSizeError, PriorSpec, Subproblem

logger = logging.getLogger(__name__)

WEIGHT_METHODS = ("lanczos", "eig")

# Posterior variances are floored here before inversion.
VARIANCE_FLOOR = 1e-12
# Relative size of beta that counts as a Lanczos breakdown.
_BREAKDOWN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LowRankEig:
    """Dominant eigenpairs, eigenvalues non-negative and descending"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.eigenvalues, dtype=np.float64).reshape(-1)
        vectors = np.asarray(self.eigenvectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != values.shape[0]:
            raise ValueError("Eigenvector block must have one column per eigenvalue")
        if np.any(values < 0) or np.any(np.diff(values) > 0):
            raise ValueError("Eigenvalues must be non-negative and sorted descending")
        object.__setattr__(self, "eigenvalues", values)
        object.__setattr__(self, "eigenvectors", vectors)

    @classmethod
    def empty(cls, n: int) -> "LowRankEig":
        return cls(np.zeros(0), np.zeros((n, 0)))

    @classmethod
    def from_pairs(cls, values: np.ndarray, vectors: np.ndarray, r: int) -> "LowRankEig":
        """Keep the ``r`` largest pairs, clamping round-off negatives to zero"""
        order = np.argsort(values)[::-1][:r]
        return cls(np.maximum(values[order], 0.0), vectors[:, order])

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def n(self) -> int:
        return int(self.eigenvectors.shape[0])

    def truncated(self, r: int) -> "LowRankEig":
        return LowRankEig(self.eigenvalues[:r], self.eigenvectors[:, :r])


@dataclass
class WeightReport:
    """Weights for every subproblem plus the metadata of how they were computed"""

    weights: List[DiagonalWeight]
    rank: int
    retained_ranks: List[int]
    truncation: List[Optional[float]]
    wall_time_s: float
    seed: int = 0
    method: str = "lanczos"
    clamped_entries: List[int] = field(default_factory=list)

    def header_lines(self) -> List[str]:
        truncation = ",".join("n/a" if t is None else repr(t) for t in self.truncation)
        return [
            f"weight_method={self.method}",
            f"rank={self.rank}",
            f"retained_ranks={','.join(str(r) for r in self.retained_ranks)}",
            f"truncation={truncation}",
            f"seed={self.seed}",
            f"weight_floor={Config.WEIGHT_FLOOR}",
            f"weight_cap={Config.WEIGHT_CAP}",
        ]

    def write_csv(self, path, header_lines: Sequence[str] = ()) -> None:
        """One line of n clamped diagonal values per subproblem"""
        with open(path, "w", encoding="utf-8") as handle:
            for line in list(header_lines) + self.header_lines():
                handle.write(f"# {line}\n")
            for weight in self.weights:
                handle.write(",".join(repr(float(v)) for v in weight.diag) + "\n")


def read_weights_csv(path) -> List[DiagonalWeight]:
    rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2, encoding="utf-8")
    return [DiagonalWeight(row) for row in rows]


# ----------------------------------------------------------------------
# Hessian actions
# ----------------------------------------------------------------------
def misfit_hessian_apply(sub: Subproblem, x_lin: ModelVector, v: np.ndarray) -> np.ndarray:
    """Gauss-Newton misfit Hessian J^T Gamma_noise^{-1} J applied to v, matrix-free"""
    jv = sub.operator.jacobian_apply(x_lin, v)
    return sub.operator.jacobian_transpose_apply(x_lin, sub.noise.whiten(jv))


def prior_conditioned_apply(sub: Subproblem, x_lin: ModelVector, v: np.ndarray) -> np.ndarray:
    """Gamma_prior^{1/2} H Gamma_prior^{1/2} v with the diagonal prior square root"""
    p = sub.prior.cov_sqrt_diag()
    return p * misfit_hessian_apply(sub, x_lin, p * np.asarray(v, dtype=np.float64))


# ----------------------------------------------------------------------
# Eigensolvers
# ----------------------------------------------------------------------
def lanczos_low_rank(
    op_apply: Callable[[np.ndarray], np.ndarray],
    n: int,
    r: int,
    seed: int = 0,
    oversample: int = 5,
) -> LowRankEig:
    """
    Dominant eigenpairs of a symmetric PSD operator by Lanczos tridiagonalization

    Runs min(n, r + oversample) steps with full reorthogonalization from a
    seeded Gaussian start vector. A breakdown returns the invariant subspace
    found so far, so the result may have fewer than ``r`` pairs.
    """
    if r < 0 or r > n:
        raise ValueError(f"Requested rank {r} outside [0, {n}]")
    if r == 0:
        return LowRankEig.empty(n)

    steps = min(n, r + oversample)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)

    basis = np.zeros((n, steps))
    alphas: List[float] = []
    betas: List[float] = []
    scale = 0.0
    for k in range(steps):
        basis[:, k] = q
        w = op_apply(q)
        alpha = float(q @ w)
        alphas.append(alpha)
        if k == steps - 1:
            break
        w = w - alpha * q
        if k > 0:
            w = w - betas[-1] * basis[:, k - 1]
        # twice is enough
        for _ in range(2):
            w = w - basis[:, :k + 1] @ (basis[:, :k + 1].T @ w)
        beta = float(np.linalg.norm(w))
        scale = max(scale, abs(alpha), beta)
        if beta <= _BREAKDOWN_TOL * max(scale, 1e-300):
            logger.debug("Lanczos breakdown after %s steps (beta=%s)", k + 1, beta)
            break
        betas.append(beta)
        q = w / beta

    m = len(alphas)
    if m == 1:
        ritz_values, ritz_vectors = np.array(alphas), np.ones((1, 1))
    else:
        ritz_values, ritz_vectors = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas[:m - 1]))
    eig = LowRankEig.from_pairs(ritz_values, basis[:, :m] @ ritz_vectors, min(r, m))
    if eig.rank < r:
        logger.warning("Lanczos returned rank %s instead of %s (invariant subspace)", eig.rank, r)
    return eig


def dense_prior_conditioned(sub: Subproblem, x_lin: ModelVector) -> np.ndarray:
    """Assemble the prior-conditioned Hessian column by column"""
    n = sub.n
    if n > Config.EIG_CAP:
        raise OracleSizeError(f"Dense eigensolver refuses n={n} (cap {Config.EIG_CAP})")
    columns = np.empty((n, n))
    unit = np.zeros(n)
    for i in range(n):
        unit[i] = 1.0
        columns[:, i] = prior_conditioned_apply(sub, x_lin, unit)
        unit[i] = 0.0
    return 0.5 * (columns + columns.T)


def posterior_diag(prior: PriorSpec, eig: LowRankEig) -> np.ndarray:
    """
    diag(Gamma_prior^{1/2} (I - V_r D_r V_r^T) Gamma_prior^{1/2}), D_r = lambda / (lambda + 1)

    Entries are floored at VARIANCE_FLOOR.
    """
    p = prior.cov_sqrt_diag()
    d = eig.eigenvalues / (eig.eigenvalues + 1.0)
    reduction = (eig.eigenvectors ** 2) @ d if eig.rank else np.zeros(p.shape[0])
    return np.maximum(p * p * (1.0 - reduction), VARIANCE_FLOOR)


# ----------------------------------------------------------------------
# Weights
# ----------------------------------------------------------------------
def _subproblem_weight(sub: Subproblem, x_lin: ModelVector, r: int, seed: int,
                       method: str, oversample: int):
    r = min(r, sub.n)
    truncation = None
    if method == "eig":
        values, vectors = scipy.linalg.eigh(dense_prior_conditioned(sub, x_lin))
        full = LowRankEig.from_pairs(values, vectors, sub.n)
        eig = full.truncated(r)
        tail = full.eigenvalues[r:]
        truncation = float(np.sum(tail / (tail + 1.0)))
    else:
        eig = lanczos_low_rank(lambda v: prior_conditioned_apply(sub, x_lin, v), sub.n, r, seed, oversample)
        if r == sub.n and eig.rank == sub.n:
            truncation = 0.0

    inverse = 1.0 / posterior_diag(sub.prior, eig)
    clamped = int(np.count_nonzero((inverse < Config.WEIGHT_FLOOR) | (inverse > Config.WEIGHT_CAP)))
    return DiagonalWeight.clamped(inverse), eig.rank, truncation, clamped


def compute_weights(
    subproblems: Sequence[Subproblem],
    x_lin: Optional[ModelVector] = None,
    r: int = 10,
    seed: int = 0,
    method: str = "lanczos",
    oversample: int = 5,
    max_workers: int = 1,
) -> WeightReport:
    """
    W_j = clamp(1 / posterior_diag_j) for every subproblem

    Args:
        subproblems: consensus terms with Jacobians available at ``x_lin``
        x_lin: linearization point, each prior's x_ref when omitted
        r: retained rank per subproblem
        seed: Lanczos start-vector seed, shared by all subproblems
        method: "lanczos" (matrix-free) or "eig" (dense eigensolver)
        oversample: extra Lanczos steps beyond r
        max_workers: subproblems are processed on a thread pool when > 1

    Returns:
        WeightReport: weights in subproblem order with rank and timing metadata
    """
    if method not in WEIGHT_METHODS:
        raise ValueError(f"Unknown weight method '{method}'. Known methods: {list(WEIGHT_METHODS)}")
    start = time.perf_counter()

    def task(sub: Subproblem):
        lin = sub.prior.x_ref if x_lin is None else x_lin
        return _subproblem_weight(sub, lin, r, seed, method, oversample)

    if max_workers > 1 and len(subproblems) > 1:
        with ThreadPoolExecutor(max_workers=min(max_workers, len(subproblems))) as pool:
            results = list(pool.map(task, subproblems))
    else:
        results = [task(sub) for sub in subproblems]

    weights, ranks, truncation, clamped = (list(column) for column in zip(*results))
    for j, count in enumerate(clamped):
        if count:
            logger.warning("Subproblem %s: %s weight entries clamped to [%s, %s]",
                           j, count, Config.WEIGHT_FLOOR, Config.WEIGHT_CAP)

    report = WeightReport(weights, r, ranks, truncation, time.perf_counter() - start, seed, method, clamped)
    logger.info("Computed %s weights (method=%s, rank=%s) in %.3fs",
                len(weights), method, r, report.wall_time_s)
    return report


def identity_weights(subproblems: Sequence[Subproblem]) -> WeightReport:
    """All-ones weights for unweighted baselines"""
    weights = [DiagonalWeight.identity(sub.n) for sub in subproblems]
    return WeightReport(weights, 0, [0] * len(weights), [None] * len(weights), 0.0, method="identity",
                        clamped_entries=[0] * len(weights))

"""Preconditioned CG, Armijo backtracking, Gauss-Newton and nonlinear CG."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .core import ModelVector, PriorSpec, Subproblem, misfit, misfit_gradient, regularizer, relative_error

logger = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "time_s", "misfit", "reg", "relerr", "gradnorm")

# Smallest diagonal entry accepted by the Jacobi preconditioner.
_JACOBI_FLOOR = 1e-30


class NonDescentDirectionError(ValueError):
    """Raised when a linesearch is asked to move along a non-descent direction."""


class SolverStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    LINESEARCH_FAILED = "linesearch_failed"
    FAILED = "failed"


# Terminal statuses that mean the run did not produce a usable answer.
FAILURE_STATUSES = frozenset({SolverStatus.LINESEARCH_FAILED.value, SolverStatus.FAILED.value})


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budgets and tolerances shared by Gauss-Newton and NLCG."""

    max_outer: int = 30
    max_pcg: int = 200
    pcg_tol: float = 1e-10
    linesearch_max: int = 20
    armijo_c: float = 1e-4
    grad_tol: float = 1e-10

    def __post_init__(self) -> None:
        if self.max_outer < 1 or self.max_pcg < 1 or self.linesearch_max < 1:
            raise ValueError("Solver iteration budgets must be at least 1")
        if not (self.pcg_tol > 0 and self.grad_tol > 0):
            raise ValueError("Solver tolerances must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")


@dataclass
class IterRecord:
    iter: int
    time_s: float
    misfit: float
    reg: float
    relerr: float
    gradnorm: float
    step: float = float("nan")
    beta: float = float("nan")

    def as_row(self) -> Tuple:
        return (self.iter, self.time_s, self.misfit, self.reg, self.relerr, self.gradnorm)


@dataclass
class IterTrace:
    """Per-iteration history of a solver run; row 0 is the starting point."""

    records: List[IterRecord] = field(default_factory=list)
    status: SolverStatus = SolverStatus.MAX_ITER

    def append(self, record: IterRecord) -> None:
        if self.records and record.iter <= self.records[-1].iter:
            raise ValueError(f"Trace rows must increase in iter ({record.iter} after {self.records[-1].iter})")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> IterRecord:
        return self.records[-1]

    @property
    def objective_values(self) -> List[float]:
        return [r.misfit + r.reg for r in self.records]

    def write_csv(self, path, header_lines: Iterable[str] = ()) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            for line in header_lines:
                handle.write(f"# {line}\n")
            handle.write(f"# status={self.status.value}\n")
            writer = csv.writer(handle)
            writer.writerow(TRACE_HEADER)
            for record in self.records:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in record.as_row()])


# ----------------------------------------------------------------------
# Objectives
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Augmentation:
    """The consensus coupling u^T W x + (rho/2) ||W (x - z)||^2 of an x-step."""

    weight: np.ndarray
    z: ModelVector
    u: ModelVector
    rho: float

    @property
    def weight_sq(self) -> np.ndarray:
        return self.weight * self.weight

    def value(self, x: ModelVector) -> float:
        scaled = self.weight * (x - self.z)
        return float(self.u @ (self.weight * x)) + 0.5 * self.rho * float(scaled @ scaled)

    def gradient(self, x: ModelVector) -> ModelVector:
        return self.weight * self.u + self.rho * self.weight_sq * (x - self.z)


class LeastSquaresObjective:
    """f(x) = sum_j Phi_j(x) + prior_count * R(x) [+ consensus augmentation].

    Exposes the value, gradient, Gauss-Newton Hessian action and its diagonal,
    which is all Gauss-Newton, NLCG and the ADMM x-step need.
    """

    def __init__(
        self,
        subproblems: Sequence[Subproblem],
        prior: PriorSpec,
        prior_count: int = 1,
        augmentation: Optional[Augmentation] = None,
    ) -> None:
        if not subproblems:
            raise ValueError("An objective needs at least one subproblem")
        self.subproblems = list(subproblems)
        self.prior = prior
        self.prior_count = prior_count
        self.augmentation = augmentation

    @classmethod
    def for_problem(cls, subproblems: Sequence[Subproblem]) -> "LeastSquaresObjective":
        """Global MAP objective: all misfits plus a single copy of the shared prior."""

        return cls(subproblems, subproblems[0].prior, prior_count=1)

    @property
    def n(self) -> int:
        return self.prior.size

    @property
    def is_linear(self) -> bool:
        return all(sub.operator.is_linear for sub in self.subproblems)

    def parts(self, x: ModelVector) -> Tuple[float, float]:
        """(misfit, regularizer) with the augmentation folded into the regularizer column."""

        total_misfit = sum(misfit(sub, x) for sub in self.subproblems)
        reg = self.prior_count * regularizer(self.prior, x)[0]
        if self.augmentation is not None:
            reg += self.augmentation.value(x)
        return total_misfit, reg

    def value(self, x: ModelVector) -> float:
        total_misfit, reg = self.parts(x)
        return total_misfit + reg

    def gradient(self, x: ModelVector) -> ModelVector:
        grad = self.prior_count * regularizer(self.prior, x)[1]
        for sub in self.subproblems:
            grad = grad + misfit_gradient(sub, x)
        if self.augmentation is not None:
            grad = grad + self.augmentation.gradient(x)
        return grad

    def hessian_apply(self, x_lin: ModelVector, v: np.ndarray) -> np.ndarray:
        """Gauss-Newton Hessian action at ``x_lin``."""

        out = self.prior_count * self.prior.hessian_apply(v)
        for sub in self.subproblems:
            jv = sub.operator.jacobian_apply(x_lin, v)
            out = out + sub.operator.jacobian_transpose_apply(x_lin, sub.noise.whiten(jv))
        if self.augmentation is not None:
            out = out + self.augmentation.rho * self.augmentation.weight_sq * v
        return out

    def hessian_diag(self, x_lin: ModelVector) -> np.ndarray:
        diag = self.prior_count * self.prior.hessian_diag()
        for sub in self.subproblems:
            diag = diag + sub.operator.normal_diag(x_lin, 1.0 / sub.noise.diag)
        if self.augmentation is not None:
            diag = diag + self.augmentation.rho * self.augmentation.weight_sq
        return diag

    def normal_rhs(self) -> np.ndarray:
        """Right-hand side of the normal equations when every operator is linear."""

        rhs = self.prior_count * self.prior.hessian_apply(self.prior.x_ref)
        zero = np.zeros(self.n)
        for sub in self.subproblems:
            rhs = rhs + sub.operator.jacobian_transpose_apply(zero, sub.noise.whiten(sub.y))
        if self.augmentation is not None:
            aug = self.augmentation
            rhs = rhs + aug.rho * aug.weight_sq * aug.z - aug.weight * aug.u
        return rhs


# ----------------------------------------------------------------------
# Krylov and linesearch
# ----------------------------------------------------------------------
class PcgResult(NamedTuple):
    x: np.ndarray
    iters: int
    rel_res: float
    negative_curvature: bool = False
    residual_norms: Tuple[float, ...] = ()


Preconditioner = Union[None, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _as_preconditioner(precond: Preconditioner) -> Callable[[np.ndarray], np.ndarray]:
    if precond is None:
        return lambda r: r
    if callable(precond):
        return precond
    inv_diag = 1.0 / np.maximum(np.asarray(precond, dtype=np.float64), _JACOBI_FLOOR)
    return lambda r: inv_diag * r


def pcg(
    op_apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    precond: Preconditioner = None,
    max_iter: int = 200,
    tol: float = 1e-10,
    x0: Optional[np.ndarray] = None,
) -> PcgResult:
    """
    Preconditioned conjugate gradients for a symmetric positive (semi)definite operator

    Args:
        op_apply: v -> A v
        b: right-hand side
        precond: Jacobi diagonal of A, a callable applying M^{-1}, or None
        max_iter: iteration budget
        tol: target for ||A x - b|| / ||b||
        x0: warm start (zero when omitted)

    Returns:
        PcgResult: (x, iters, rel_res, negative_curvature, residual_norms); a
        direction with non-positive curvature stops the iteration and flags it.
    """
    b = np.asarray(b, dtype=np.float64)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return PcgResult(np.zeros_like(b), 0, 0.0, False, (0.0,))

    apply_inv = _as_preconditioner(precond)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - op_apply(x) if x0 is not None else b.copy()
    norms = [float(np.linalg.norm(r))]
    if norms[-1] <= tol * b_norm:
        return PcgResult(x, 0, norms[-1] / b_norm, False, tuple(norms))

    s = apply_inv(r)
    p = s.copy()
    rs = float(r @ s)
    iters = 0
    flagged = False
    while iters < max_iter:
        ap = op_apply(p)
        curvature = float(p @ ap)
        if curvature <= 0.0:
            logger.debug("PCG hit non-positive curvature %s at iteration %s", curvature, iters)
            flagged = True
            break
        step = rs / curvature
        x = x + step * p
        r = r - step * ap
        iters += 1
        norms.append(float(np.linalg.norm(r)))
        if norms[-1] <= tol * b_norm:
            break
        s = apply_inv(r)
        rs_new = float(r @ s)
        p = s + (rs_new / rs) * p
        rs = rs_new

    return PcgResult(x, iters, norms[-1] / b_norm, flagged, tuple(norms))


def armijo_linesearch(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    p: np.ndarray,
    g: np.ndarray,
    c: float = 1e-4,
    max_halvings: int = 20,
    f0: Optional[float] = None,
) -> Optional[float]:
    """
    Largest gamma in {1, 1/2, 1/4, ...} with f(x + gamma p) <= f(x) + c gamma g^T p

    Returns None once ``max_halvings`` halvings have been tried without success.

    Raises:
        NonDescentDirectionError: if g^T p >= 0
    """
    slope = float(g @ p)
    if not slope < 0.0:
        raise NonDescentDirectionError(f"Direction is not a descent direction (g^T p = {slope})")

    fx = f(x) if f0 is None else f0
    gamma = 1.0
    for _ in range(max_halvings + 1):
        if f(x + gamma * p) <= fx + c * gamma * slope:
            return gamma
        gamma *= 0.5
    logger.warning("Armijo linesearch failed after %s halvings", max_halvings)
    return None


# ----------------------------------------------------------------------
# Outer solvers
# ----------------------------------------------------------------------
def _record(objective, x, k, start, truth, gradient, step=float("nan"), beta=float("nan")) -> IterRecord:
    total_misfit, reg = objective.parts(x)
    return IterRecord(
        iter=k,
        time_s=time.perf_counter() - start,
        misfit=total_misfit,
        reg=reg,
        relerr=relative_error(x, truth),
        gradnorm=float(np.linalg.norm(gradient)),
        step=step,
        beta=beta,
    )


def _is_stationary(gradient: np.ndarray, value: float, cfg: SolverConfig) -> bool:
    return float(np.linalg.norm(gradient)) <= cfg.grad_tol * (1.0 + abs(value))


def solve_normal_equations(
    objective: LeastSquaresObjective, x0: ModelVector, cfg: SolverConfig
) -> PcgResult:
    """PCG on the normal equations of a linear objective, warm-started at ``x0``."""

    return pcg(
        lambda v: objective.hessian_apply(x0, v),
        objective.normal_rhs(),
        precond=objective.hessian_diag(x0),
        max_iter=cfg.max_pcg,
        tol=cfg.pcg_tol,
        x0=x0,
    )


def gauss_newton(
    objective: LeastSquaresObjective,
    x0: ModelVector,
    cfg: SolverConfig = SolverConfig(),
    truth: Optional[ModelVector] = None,
) -> Tuple[ModelVector, IterTrace]:
    """
    Gauss-Newton with PCG inner solves and Armijo backtracking

    Stops after ``cfg.max_outer`` iterations, when the gradient norm drops
    below grad_tol * (1 + |f|), or when the linesearch fails; the trace
    status records which.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=np.float64)
    gradient = objective.gradient(x)
    trace = IterTrace()
    trace.append(_record(objective, x, 0, start, truth, gradient))

    for k in range(1, cfg.max_outer + 1):
        value = objective.value(x)
        if _is_stationary(gradient, value, cfg):
            trace.status = SolverStatus.CONVERGED
            break

        inner = pcg(
            lambda v: objective.hessian_apply(x, v),
            -gradient,
            precond=objective.hessian_diag(x),
            max_iter=cfg.max_pcg,
            tol=cfg.pcg_tol,
        )
        direction = inner.x
        if not float(gradient @ direction) < 0.0:
            direction = -gradient

        gamma = armijo_linesearch(
            objective.value, x, direction, gradient, cfg.armijo_c, cfg.linesearch_max, f0=value
        )
        if gamma is None:
            trace.status = SolverStatus.LINESEARCH_FAILED
            break

        x = x + gamma * direction
        gradient = objective.gradient(x)
        trace.append(_record(objective, x, k, start, truth, gradient, step=gamma))
        logger.debug("GN iter %s: f=%s |g|=%s gamma=%s pcg=%s",
                     k, trace.last.misfit + trace.last.reg, trace.last.gradnorm, gamma, inner.iters)
    else:
        if _is_stationary(gradient, objective.value(x), cfg):
            trace.status = SolverStatus.CONVERGED

    logger.info("Gauss-Newton finished after %s iterations (%s)", trace.last.iter, trace.status.value)
    return x, trace


def nlcg_beta(p: np.ndarray, d: np.ndarray, g_next: np.ndarray) -> Optional[float]:
    """(1 / p^T d) (d - 2 p ||d||^2 / p^T d)^T g_next, or None for a degenerate p^T d."""

    pd = float(p @ d)
    if abs(pd) < 1e-14 * float(np.linalg.norm(p)) * float(np.linalg.norm(d)) or pd == 0.0:
        return None
    return float((d - 2.0 * p * float(d @ d) / pd) @ g_next) / pd


def nlcg(
    objective,
    x0: ModelVector,
    cfg: SolverConfig = SolverConfig(max_outer=100),
    truth: Optional[ModelVector] = None,
    beta_zero: bool = False,
) -> Tuple[ModelVector, IterTrace]:
    """
    Nonlinear conjugate gradients with Armijo steps

    ``objective`` needs ``value``, ``gradient`` and ``parts``. ``beta_zero``
    forces steepest descent. A degenerate p^T d or a non-descent direction
    restarts along the negative gradient.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=np.float64)
    gradient = objective.gradient(x)
    direction = -gradient
    trace = IterTrace()
    trace.append(_record(objective, x, 0, start, truth, gradient))

    for k in range(1, cfg.max_outer + 1):
        value = objective.value(x)
        if _is_stationary(gradient, value, cfg):
            trace.status = SolverStatus.CONVERGED
            break
        if not float(gradient @ direction) < 0.0:
            direction = -gradient

        gamma = armijo_linesearch(
            objective.value, x, direction, gradient, cfg.armijo_c, cfg.linesearch_max, f0=value
        )
        if gamma is None:
            trace.status = SolverStatus.LINESEARCH_FAILED
            break

        x_next = x + gamma * direction
        g_next = objective.gradient(x_next)
        beta = 0.0 if beta_zero else nlcg_beta(direction, g_next - gradient, g_next)
        if beta is None:
            logger.debug("NLCG restart at iteration %s (degenerate p^T d)", k)
            beta = 0.0
        direction = -g_next + beta * direction
        x, gradient = x_next, g_next
        trace.append(_record(objective, x, k, start, truth, gradient, step=gamma, beta=beta))
    else:
        if _is_stationary(gradient, objective.value(x), cfg):
            trace.status = SolverStatus.CONVERGED

    logger.info("NLCG finished after %s iterations (%s)", trace.last.iter, trace.status.value)
    return x, trace

"""Synchronous uncertainty-weighted consensus ADMM."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import Config
from .core import (
    ConsensusState,
    DiagonalWeight,
    ModelVector,
    Subproblem,
    misfit,
    relative_error,
)
from .solvers import (
    Augmentation,
    LeastSquaresObjective,
    SolverConfig,
    SolverStatus,
    gauss_newton,
    solve_normal_equations,
)

logger = logging.getLogger(__name__)

INIT_MODES = ("reference", "local")
EXECUTORS = ("serial", "threads")

SYNC_COLUMNS = ("iter", "time_s", "misfit", "relerr", "r_norm", "s_norm", "rho", "inner_ok")
ASYNC_COLUMNS = SYNC_COLUMNS + ("updates", "reporter_set", "max_staleness")


class AdmmRunError(RuntimeError):
    """Raised when a subproblem fails; carries the trace recorded so far."""

    def __init__(self, message: str, trace: "AdmmTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class AdmmConfig:
    rho0: float = 5.0
    rho_min: float = 1e-12
    mu: float = 10.0
    tau_incr: float = 2.0
    tau_decr: float = 2.0
    eps_pri: Optional[float] = None
    eps_dual: Optional[float] = None
    max_outer: int = 10
    inner: SolverConfig = field(default_factory=lambda: SolverConfig(max_outer=3))
    init: str = "reference"
    executor: str = "serial"
    adaptive: bool = True
    refresh_weights: bool = False
    weight_rank: int = 10
    weight_method: str = "lanczos"
    weight_seed: int = 0

    def __post_init__(self) -> None:
        if not self.mu > 1 or not self.tau_incr > 1 or not self.tau_decr > 1:
            raise ValueError("mu, tau_incr and tau_decr must all exceed 1")
        if not self.rho_min > 0 or self.rho0 < self.rho_min:
            raise ValueError(f"rho0={self.rho0} must be at least rho_min={self.rho_min} > 0")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"Unknown init '{self.init}'. Known modes: {list(INIT_MODES)}")
        if self.executor not in EXECUTORS:
            raise ValueError(f"Unknown executor '{self.executor}'. Known executors: {list(EXECUTORS)}")

    def with_overrides(self, **changes) -> "AdmmConfig":
        return replace(self, **changes)


@dataclass
class AdmmRecord:
    iter: int
    time_s: float
    misfit: float
    relerr: float
    r_norm: float
    s_norm: float
    rho: float
    updates: int = 0
    reporter_set: Tuple[int, ...] = ()
    max_staleness: int = 0
    inner_ok: bool = True

    def value(self, column: str):
        if column == "reporter_set":
            return ";".join(str(j) for j in self.reporter_set)
        if column == "inner_ok":
            return int(self.inner_ok)
        value = getattr(self, column)
        return repr(value) if isinstance(value, float) else value


@dataclass
class AdmmTrace:
    """Per-iteration (or per global update) history of an ADMM run."""

    records: List[AdmmRecord] = field(default_factory=list)
    columns: Tuple[str, ...] = SYNC_COLUMNS
    status: str = SolverStatus.MAX_ITER.value

    def append(self, record: AdmmRecord) -> None:
        if self.records and record.iter <= self.records[-1].iter:
            raise ValueError(f"Trace rows must increase in iter ({record.iter} after {self.records[-1].iter})")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> AdmmRecord:
        return self.records[-1]

    def rows(self, columns: Optional[Sequence[str]] = None, include_time: bool = True) -> List[Tuple]:
        selected = [c for c in (columns or self.columns) if include_time or c != "time_s"]
        return [tuple(record.value(c) for c in selected) for record in self.records]

    def write_csv(self, path, header_lines: Iterable[str] = ()) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            for line in header_lines:
                handle.write(f"# {line}\n")
            handle.write(f"# status={self.status}\n")
            writer = csv.writer(handle)
            writer.writerow(self.columns)
            writer.writerows(self.rows())


# ----------------------------------------------------------------------
# ADMM steps
# ----------------------------------------------------------------------
def _diag(weight: Union[DiagonalWeight, np.ndarray, float]) -> np.ndarray:
    if isinstance(weight, DiagonalWeight):
        return weight.diag
    return np.asarray(weight, dtype=np.float64)


def local_solve(
    sub: Subproblem,
    z: ModelVector,
    u: ModelVector,
    rho: float,
    inner_cfg: SolverConfig,
    x_prev: Optional[ModelVector] = None,
    augmented: bool = True,
) -> Tuple[ModelVector, bool]:
    """x-step returning (x_j, ok); ``augmented=False`` drops the consensus coupling."""

    augmentation = Augmentation(sub.weight.diag, z, u, rho) if augmented else None
    objective = LeastSquaresObjective([sub], sub.prior, 1, augmentation)
    x0 = np.array(z if x_prev is None else x_prev, dtype=np.float64)

    if objective.is_linear:
        result = solve_normal_equations(objective, x0, inner_cfg)
        if result.negative_curvature:
            logger.warning("x-step PCG met non-positive curvature after %s iterations", result.iters)
        return result.x, not result.negative_curvature

    x, trace = gauss_newton(objective, x0, inner_cfg)
    return x, trace.status != SolverStatus.LINESEARCH_FAILED


def x_step(
    sub: Subproblem,
    z: ModelVector,
    u_j: ModelVector,
    rho: float,
    inner_cfg: SolverConfig = SolverConfig(max_outer=3),
    x_prev: Optional[ModelVector] = None,
) -> ModelVector:
    """Approximate minimizer of Phi_j + R + u_j^T W_j x + (rho/2) ||W_j (x - z)||^2."""

    return local_solve(sub, z, u_j, rho, inner_cfg, x_prev)[0]


def z_step(
    x: Sequence[ModelVector],
    u: Sequence[ModelVector],
    W: Sequence[Union[DiagonalWeight, np.ndarray]],
    rho: float,
) -> ModelVector:
    """z = (sum W_j^2)^{-1} sum (W_j^2 x_j + W_j u_j / rho), elementwise, summed in index order."""

    if not rho > 0:
        raise ValueError(f"The z-step needs rho > 0, got {rho}")
    numerator = np.zeros_like(np.asarray(x[0], dtype=np.float64))
    normalizer = np.zeros_like(numerator)
    for x_j, u_j, w_j in zip(x, u, W):
        w = _diag(w_j)
        numerator = numerator + (w * w * x_j + w * u_j / rho)
        normalizer = normalizer + w * w
    if np.any(normalizer <= 0):
        raise ValueError("Weighted z-step normalizer has non-positive entries")
    return numerator / normalizer


def u_step(u_j: ModelVector, x_j: ModelVector, z: ModelVector, W_j, rho: float) -> ModelVector:
    return u_j + rho * _diag(W_j) * (x_j - z)


def residuals(state: ConsensusState, z_prev: ModelVector, W: Sequence) -> Tuple[float, float]:
    """Stacked primal and dual residual norms."""

    primal = 0.0
    dual = 0.0
    for x_j, w_j in zip(state.x, W):
        w = _diag(w_j)
        primal += float(np.sum((w * (x_j - state.z)) ** 2))
        dual += float(np.sum((w * (state.z - z_prev)) ** 2))
    return float(np.sqrt(primal)), state.rho * float(np.sqrt(dual))


def adapt_rho(rho: float, r_norm: float, s_norm: float, cfg: AdmmConfig) -> float:
    """Residual balancing; duals are left unscaled when rho changes."""

    if r_norm > cfg.mu * s_norm:
        return rho * cfg.tau_incr
    if s_norm > cfg.mu * r_norm:
        return max(rho / cfg.tau_decr, cfg.rho_min)
    return rho


def tolerances(state: ConsensusState, W: Sequence, cfg: AdmmConfig) -> Tuple[float, float]:
    """(eps_pri, eps_dual): configured values, else sqrt(N n) 1e-4 + 1e-3 max(||Wx||, ||Wz||)."""

    if cfg.eps_pri is not None and cfg.eps_dual is not None:
        return cfg.eps_pri, cfg.eps_dual
    wx = 0.0
    wz = 0.0
    for x_j, w_j in zip(state.x, W):
        w = _diag(w_j)
        wx += float(np.sum((w * x_j) ** 2))
        wz += float(np.sum((w * state.z) ** 2))
    default = np.sqrt(state.n_sub * state.z.shape[0]) * 1e-4 + 1e-3 * max(np.sqrt(wx), np.sqrt(wz))
    eps_pri = cfg.eps_pri if cfg.eps_pri is not None else float(default)
    eps_dual = cfg.eps_dual if cfg.eps_dual is not None else float(default)
    return eps_pri, eps_dual


def total_misfit(subproblems: Sequence[Subproblem], z: ModelVector) -> float:
    return float(sum(misfit(sub, z) for sub in subproblems))


def reference_model(subproblems: Sequence[Subproblem]) -> ModelVector:
    return np.array(subproblems[0].prior.x_ref, dtype=np.float64)


# ----------------------------------------------------------------------
# Synchronous engine
# ----------------------------------------------------------------------
def _refresh(subproblems: List[Subproblem], z: ModelVector, cfg: AdmmConfig) -> List[Subproblem]:
    from .uq_weights import compute_weights

    report = compute_weights(subproblems, x_lin=z, r=cfg.weight_rank, seed=cfg.weight_seed,
                             method=cfg.weight_method)
    return [sub.with_weight(w) for sub, w in zip(subproblems, report.weights)]


def run_sync(
    subproblems: Sequence[Subproblem],
    cfg: AdmmConfig = AdmmConfig(),
    truth: Optional[ModelVector] = None,
) -> Tuple[ModelVector, AdmmTrace]:
    """
    Consensus ADMM with a barrier after every round of N x-steps

    Each iteration runs every x-step, then the z-step, every u-step, the
    residuals, the stopping test and finally the penalty update. Summation
    over subproblems always runs in index order.

    Raises:
        AdmmRunError: when an x-step raises; the partial trace is attached
    """
    subproblems = list(subproblems)
    if not subproblems:
        raise ValueError("Consensus ADMM needs at least one subproblem")

    start = time.perf_counter()
    state = ConsensusState.initial(reference_model(subproblems), len(subproblems), cfg.rho0)
    trace = AdmmTrace()
    pool = ThreadPoolExecutor(max_workers=min(Config.MAX_WORKERS, len(subproblems))) \
        if cfg.executor == "threads" else None

    try:
        for k in range(1, cfg.max_outer + 1):
            if cfg.refresh_weights and k > 1:
                subproblems = _refresh(subproblems, state.z, cfg)
            weights = [sub.weight for sub in subproblems]
            augmented = not (cfg.init == "local" and k == 1)
            rho = state.rho

            def solve(j: int):
                return local_solve(subproblems[j], state.z, state.u[j], rho, cfg.inner, state.x[j], augmented)

            try:
                if pool is not None:
                    results = list(pool.map(solve, range(len(subproblems))))
                else:
                    results = [solve(j) for j in range(len(subproblems))]
            except Exception as exc:
                trace.status = SolverStatus.FAILED.value
                raise AdmmRunError(f"x-step failed at iteration {k}: {exc}", trace) from exc

            state.x = [x for x, _ in results]
            z_prev = state.z
            state.z = z_step(state.x, state.u, weights, rho)
            state.u = [u_step(u, x, state.z, w, rho) for u, x, w in zip(state.u, state.x, weights)]
            state.iter = k

            r_norm, s_norm = residuals(state, z_prev, weights)
            trace.append(AdmmRecord(
                iter=k,
                time_s=time.perf_counter() - start,
                misfit=total_misfit(subproblems, state.z),
                relerr=relative_error(state.z, truth),
                r_norm=r_norm,
                s_norm=s_norm,
                rho=rho,
                inner_ok=all(ok for _, ok in results),
            ))
            logger.info("ADMM iter %s: misfit=%.6e relerr=%.4e r=%.3e s=%.3e rho=%.3e",
                        k, trace.last.misfit, trace.last.relerr, r_norm, s_norm, rho)

            eps_pri, eps_dual = tolerances(state, weights, cfg)
            if r_norm <= eps_pri and s_norm <= eps_dual:
                trace.status = SolverStatus.CONVERGED.value
                break
            if cfg.adaptive:
                state.rho = adapt_rho(rho, r_norm, s_norm, cfg)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    return state.z, trace

"""Application service that runs generation, weighting, solving and oracle pipelines."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from ..admm import AdmmConfig, AdmmRunError, run_sync
from ..async_engine import SCHEDULERS, AsyncConfig, run_async
from ..config import ConfigError, RunConfig
from ..core import (
    DiagonalWeight,
    condition_number,
    dense_map_estimate,
    dense_posterior_covariance,
    relative_error,
    relative_residual,
)
from ..generators import AVAILABLE_GENERATORS, GeneratedProblem, get_problem_generator
from ..operators import matrix_collection, read_manifest
from ..solvers import FAILURE_STATUSES, LeastSquaresObjective, SolverConfig, SolverStatus, gauss_newton, nlcg
from ..store import ArtifactStore
from ..uq_weights import WeightReport, compute_weights, identity_weights

logger = logging.getLogger(__name__)

SOLVERS = ("admm_sync", "admm_async", "gauss_newton", "nlcg")
BATCH_COLUMNS = (
    "name",
    "cond",
    "unweighted_relres",
    "unweighted_relerr",
    "weighted_relres",
    "weighted_relerr",
    "status",
)


class ExperimentError(RuntimeError):
    """Raised when a solver run fails in a way the caller should report."""


@dataclass
class SolveSummary:
    """Outcome of one solver run."""

    solver: str
    status: str
    iterations: int
    rel_residual: float
    rel_error: float
    wall_time_s: float
    outputs: Dict[str, str] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status in FAILURE_STATUSES or not math.isfinite(self.rel_residual)

    def line(self) -> str:
        return (
            f"solver={self.solver} status={self.status} iterations={self.iterations} "
            f"relres={self.rel_residual:.6e} relerr={self.rel_error:.6e} time_s={self.wall_time_s:.3f}"
        )


@dataclass
class OracleResult:
    map_estimate: np.ndarray
    consensus_estimate: np.ndarray
    posterior_diags: List[np.ndarray]


@dataclass
class BatchRow:
    name: str
    cond: Optional[float]
    unweighted_relres: float = float("nan")
    unweighted_relerr: float = float("nan")
    weighted_relres: float = float("nan")
    weighted_relerr: float = float("nan")
    status: str = "ok"

    def as_row(self) -> List:
        cond = "n/a" if self.cond is None else repr(self.cond)
        return [self.name, cond, repr(self.unweighted_relres), repr(self.unweighted_relerr),
                repr(self.weighted_relres), repr(self.weighted_relerr), self.status]


def admm_config_from(cfg: RunConfig) -> AdmmConfig:
    return AdmmConfig(
        rho0=cfg.rho0,
        eps_pri=cfg.eps_pri,
        eps_dual=cfg.eps_dual,
        max_outer=cfg.max_outer,
        inner=SolverConfig(max_outer=cfg.inner_max_outer, max_pcg=cfg.max_pcg, pcg_tol=cfg.pcg_tol),
        init=cfg.init,
        executor=cfg.executor,
        weight_rank=cfg.rank,
        weight_method=cfg.weight_method,
        weight_seed=cfg.seed,
    )


class ExperimentService:
    """Facade that orchestrates generators, weights, solvers and artifact files."""

    def __init__(
        self,
        store_factory: Callable[[str], ArtifactStore] = ArtifactStore,
        generator_factory: Callable[[str], object] = get_problem_generator,
    ) -> None:
        self._store_factory = store_factory
        self._generator_factory = generator_factory

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------
    def list_generators(self) -> Iterable[str]:
        return AVAILABLE_GENERATORS.keys()

    def generate(self, cfg: RunConfig) -> GeneratedProblem:
        """Build the configured problem and write it to the output directory."""

        generator = self._generator_factory(cfg.problem)
        logger.info("Generating %s", generator.describe())
        problem = generator.build(cfg)
        self._store(cfg).save_problem(problem, cfg.header_lines())
        return problem

    def compute_weights(self, cfg: RunConfig) -> WeightReport:
        """Compute (or, in identity mode, emit all-ones) weights for the stored problem."""

        store = self._store(cfg)
        problem = store.load_problem(cfg)
        report = self._weights_for(problem, cfg)
        store.save_weights(report, cfg.header_lines())
        return report

    def solve(self, cfg: RunConfig) -> SolveSummary:
        if cfg.solver not in SOLVERS:
            raise ConfigError(f"Unknown solver '{cfg.solver}'. Known solvers: {list(SOLVERS)}")

        store = self._store(cfg)
        problem = store.load_problem(cfg)
        subproblems = problem.subproblems
        if cfg.solver.startswith("admm"):
            weights = self._load_weights(store, problem, cfg)
            subproblems = [sub.with_weight(w) for sub, w in zip(subproblems, weights)]

        header = cfg.header_lines()
        stem = f"solve/{cfg.solver}"
        trace_path = store.path(f"{stem}_trace.csv")

        start = time.perf_counter()
        try:
            status, iterations, x, trace = self._run_solver(subproblems, problem.truth, cfg)
        except AdmmRunError as exc:
            exc.trace.write_csv(trace_path, header)
            summary = SolveSummary(
                solver=cfg.solver,
                status=SolverStatus.FAILED.value,
                iterations=len(exc.trace),
                rel_residual=float("nan"),
                rel_error=exc.trace.last.relerr if len(exc.trace) else float("nan"),
                wall_time_s=time.perf_counter() - start,
                outputs={"trace": str(trace_path)},
            )
            self._write_summary(store, stem, header, summary)
            raise ExperimentError(f"{cfg.solver} failed: {exc}") from exc
        elapsed = time.perf_counter() - start

        trace.write_csv(trace_path, header)
        solution_path = store.save_solution(f"{stem}_x", x, header, problem.image_shape)

        summary = SolveSummary(
            solver=cfg.solver,
            status=status,
            iterations=iterations,
            rel_residual=relative_residual(problem.subproblems, x),
            rel_error=relative_error(x, problem.truth),
            wall_time_s=elapsed,
            outputs={"trace": str(trace_path), "solution": str(solution_path)},
        )
        self._write_summary(store, stem, header, summary)
        logger.info("Solve finished: %s", summary.line())
        return summary

    def oracle(self, cfg: RunConfig) -> OracleResult:
        """Dense MAP, consensus minimizer and per-subproblem posterior diagonals."""

        store = self._store(cfg)
        problem = store.load_problem(cfg)
        subproblems = problem.subproblems
        prior = subproblems[0].prior

        map_estimate = dense_map_estimate(subproblems, prior, prior_count=1)
        consensus = dense_map_estimate(subproblems, prior, prior_count=len(subproblems))
        diags = [
            np.diag(dense_posterior_covariance(sub.operator.to_dense(), sub.noise, sub.prior)).copy()
            for sub in subproblems
        ]

        header = cfg.header_lines()
        store.save_solution(f"{ArtifactStore.ORACLE_DIR}/map", map_estimate, header, problem.image_shape)
        store.save_solution(f"{ArtifactStore.ORACLE_DIR}/consensus", consensus, header, problem.image_shape)
        for j, diag in enumerate(diags):
            store.write_vector(store.path(f"{ArtifactStore.ORACLE_DIR}/posterior_diag_{j:02d}.csv"), diag, header)
        logger.info("Oracle: MAP relerr=%.6e consensus relerr=%.6e",
                    relative_error(map_estimate, problem.truth), relative_error(consensus, problem.truth))
        return OracleResult(map_estimate, consensus, diags)

    def batch(self, cfg: RunConfig) -> List[BatchRow]:
        """Unweighted vs weighted sync ADMM on every manifest matrix; failures become rows."""

        store = self._store(cfg)
        if cfg.manifest:
            paths = read_manifest(cfg.manifest)
        else:
            paths = matrix_collection(store.root / "collection", seed=cfg.seed)

        rows = []
        for path in paths:
            rows.append(self._batch_row(Path(path), cfg))
        store.write_table(ArtifactStore.BATCH_FILE, BATCH_COLUMNS, [row.as_row() for row in rows],
                          cfg.header_lines())
        return rows

    # ------------------------------------------------------------------
    # Internal helpers
    # ------------------------------------------------------------------
    def _store(self, cfg: RunConfig) -> ArtifactStore:
        return self._store_factory(cfg.out)

    @staticmethod
    def _weights_for(problem: GeneratedProblem, cfg: RunConfig) -> WeightReport:
        if cfg.weights == "identity":
            return identity_weights(problem.subproblems)
        if cfg.weights != "uq":
            raise ConfigError(f"Unknown weights mode '{cfg.weights}'. Known modes: ['uq', 'identity']")
        return compute_weights(problem.subproblems, r=cfg.rank, seed=cfg.seed,
                               method=cfg.weight_method, oversample=cfg.oversample)

    @staticmethod
    def _load_weights(store: ArtifactStore, problem: GeneratedProblem, cfg: RunConfig) -> List[DiagonalWeight]:
        if cfg.weights == "identity":
            return [DiagonalWeight.identity(problem.n) for _ in problem.subproblems]
        weights = store.load_weights()
        if len(weights) != problem.n_sub:
            raise ConfigError(f"Weight file has {len(weights)} rows for {problem.n_sub} subproblems")
        return weights

    @staticmethod
    def _write_summary(store: ArtifactStore, stem: str, header: List[str], summary: SolveSummary) -> None:
        store.path(f"{stem}_summary.txt").write_text(
            "".join(f"# {line}\n" for line in header) + summary.line() + "\n", encoding="utf-8"
        )

    @staticmethod
    def _run_solver(subproblems, truth, cfg: RunConfig):
        """Run the configured solver; ADMM failures propagate as AdmmRunError."""

        if cfg.solver == "admm_sync":
            z, trace = run_sync(subproblems, admm_config_from(cfg), truth)
            return trace.status, len(trace), z, trace
        if cfg.solver == "admm_async":
            if cfg.scheduler not in SCHEDULERS:
                raise ConfigError(f"Unknown scheduler '{cfg.scheduler}'. Known schedulers: {list(SCHEDULERS)}")
            async_cfg = AsyncConfig(n_a=cfg.n_a, k_a=cfg.k_a, scheduler=cfg.scheduler, latency=cfg.latency,
                                    seed=cfg.seed, z_update=cfg.z_update, admm=admm_config_from(cfg))
            z, trace = run_async(subproblems, async_cfg, truth)
            return trace.status, len(trace), z, trace

        objective = LeastSquaresObjective.for_problem(subproblems)
        solver_cfg = SolverConfig(max_outer=cfg.max_outer, max_pcg=cfg.max_pcg, pcg_tol=cfg.pcg_tol)
        run = gauss_newton if cfg.solver == "gauss_newton" else nlcg
        x, trace = run(objective, objective.prior.x_ref, solver_cfg, truth)
        return trace.status.value, trace.last.iter, x, trace

    def _batch_row(self, path: Path, cfg: RunConfig) -> BatchRow:
        row_cfg = cfg.with_overrides(problem="mtx", matrix=str(path), noise_level=cfg.noise_level or 0.0)
        try:
            problem = self._generator_factory("mtx").build(row_cfg)
            dense = np.vstack([sub.operator.to_dense() for sub in problem.subproblems])
            row = BatchRow(problem.name, condition_number(dense))
            admm_cfg = admm_config_from(row_cfg)

            z, _ = run_sync(problem.subproblems, admm_cfg, problem.truth)
            row.unweighted_relres = relative_residual(problem.subproblems, z)
            row.unweighted_relerr = relative_error(z, problem.truth)

            report = self._weights_for(problem, row_cfg.with_overrides(weights="uq"))
            weighted = [sub.with_weight(w) for sub, w in zip(problem.subproblems, report.weights)]
            z, _ = run_sync(weighted, admm_cfg, problem.truth)
            row.weighted_relres = relative_residual(problem.subproblems, z)
            row.weighted_relerr = relative_error(z, problem.truth)
        except (ValueError, RuntimeError, OSError) as exc:
            logger.warning("Batch row %s failed: %s", path.name, exc)
            return BatchRow(path.stem, None, status=f"error: {exc}")

        logger.info("Batch %s: unweighted relerr=%.4e weighted relerr=%.4e",
                    row.name, row.unweighted_relerr, row.weighted_relerr)
        return row

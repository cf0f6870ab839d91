"""
Asynchronous consensus ADMM with a partial barrier and bounded staleness

A single coordinator owns the consensus state and processes one worker report
at a time. A global update fires once ``n_a`` distinct workers have reported
and every worker whose staleness has reached ``k_a`` is among them. Workers
are either driven by a seeded discrete-event simulator or run on a thread pool.
"""
from __future__ import annotations

import heapq
import logging
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .admm import (
    ASYNC_COLUMNS,
    AdmmConfig,
    AdmmRecord,
    AdmmRunError,
    AdmmTrace,
    adapt_rho,
    local_solve,
    reference_model,
    residuals,
    tolerances,
    total_misfit,
    u_step,
    z_step,
)
from .config import Config
from .core import ConsensusState, ModelVector, Subproblem, relative_error
from .solvers import SolverStatus

logger = logging.getLogger(__name__)

SCHEDULERS = ("simulated", "parallel")
Z_UPDATES = ("all_cached", "reporters")


class WorkerCrashError(AdmmRunError):
    """Raised when a parallel worker raises while computing its x-step."""


class LatencyError(ValueError):
    """Raised for malformed latency specifications."""


# ----------------------------------------------------------------------
# Latencies
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Latency:
    """Per-task latency distribution: fixed, uniform(a, b) or two-point."""

    kind: str
    params: Tuple[float, ...]

    def __post_init__(self):
        if self.kind == "fixed":
            ok = len(self.params) == 1 and self.params[0] > 0
        elif self.kind == "uniform":
            ok = len(self.params) == 2 and 0 < self.params[0] <= self.params[1]
        elif self.kind == "twopoint":
            ok = (len(self.params) == 3 and self.params[0] > 0 and self.params[1] > 0
                  and 0 <= self.params[2] <= 1)
        else:
            raise LatencyError(f"Unknown latency kind '{self.kind}'")
        if not ok:
            raise LatencyError(f"Invalid parameters {self.params} for {self.kind} latency")

    @classmethod
    def parse(cls, text: str) -> "Latency":
        """``fixed:v``, ``uniform:a,b`` or ``twopoint:a,b,p`` (a with probability p)."""

        kind, _, raw = text.strip().partition(":")
        try:
            params = tuple(float(v) for v in raw.split(",")) if raw else ()
        except ValueError as exc:
            raise LatencyError(f"Cannot parse latency '{text}'") from exc
        return cls(kind.strip().lower(), params)

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "fixed":
            return self.params[0]
        if self.kind == "uniform":
            return float(rng.uniform(self.params[0], self.params[1]))
        a, b, p = self.params
        return a if rng.random() < p else b


def parse_latencies(text: str, n_workers: int) -> List[Latency]:
    """One spec for every worker, or exactly ``n_workers`` specs separated by ';'."""

    specs = [Latency.parse(part) for part in text.split(";") if part.strip()]
    if len(specs) == 1:
        return specs * n_workers
    if len(specs) != n_workers:
        raise LatencyError(f"Got {len(specs)} latency specs for {n_workers} workers")
    return specs


@dataclass(frozen=True)
class AsyncConfig:
    n_a: int = 4
    k_a: int = 1
    scheduler: str = "simulated"
    latency: str = "fixed:1.0"
    seed: int = 0
    z_update: str = "all_cached"
    admm: AdmmConfig = field(default_factory=AdmmConfig)

    def __post_init__(self):
        if self.n_a < 1 or self.k_a < 1:
            raise ValueError("n_a and k_a must both be at least 1")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"Unknown scheduler '{self.scheduler}'. Known schedulers: {list(SCHEDULERS)}")
        if self.z_update not in Z_UPDATES:
            raise ValueError(f"Unknown z_update '{self.z_update}'. Known variants: {list(Z_UPDATES)}")


@dataclass
class ReportEvent:
    worker: int
    time: float
    seq: int
    x: Optional[ModelVector] = None
    ok: bool = True
    version: int = 0


Task = Callable[[], Tuple[ModelVector, bool]]


# ----------------------------------------------------------------------
# Schedulers
# ----------------------------------------------------------------------
class SimulatedScheduler:
    """Seeded discrete-event clock; events are totally ordered by (time, seq)."""

    def __init__(self, latencies: Sequence[Latency], seed: int = 0):
        self.latencies = list(latencies)
        self._rng = np.random.default_rng(seed)
        self._queue: List[Tuple[float, int, int]] = []
        self._tasks: Dict[int, Tuple[Task, int]] = {}
        self._seq = 0
        self.now = 0.0

    def dispatch(self, worker: int, task: Optional[Task] = None, version: int = 0) -> None:
        finish = self.now + self.latencies[worker].draw(self._rng)
        heapq.heappush(self._queue, (finish, self._seq, worker))
        self._seq += 1
        if task is not None:
            self._tasks[worker] = (task, version)

    def next_event(self) -> ReportEvent:
        finish, seq, worker = heapq.heappop(self._queue)
        self.now = finish
        event = ReportEvent(worker, finish, seq)
        if worker in self._tasks:
            task, event.version = self._tasks.pop(worker)
            event.x, event.ok = task()
        return event

    def close(self) -> None:
        self._queue.clear()
        self._tasks.clear()


def simulated_scheduler(seed: int, latencies: Sequence[Latency]) -> Iterator[ReportEvent]:
    """Endless report stream of free-running workers that restart on every report."""

    scheduler = SimulatedScheduler(latencies, seed)
    for worker in range(len(scheduler.latencies)):
        scheduler.dispatch(worker)
    while True:
        event = scheduler.next_event()
        yield event
        scheduler.dispatch(event.worker)


class ParallelScheduler:
    """Runs x-step tasks on a thread pool and hands back completions one at a time."""

    def __init__(self, n_workers: int, max_workers: Optional[int] = None):
        self._pool = ThreadPoolExecutor(max_workers=max_workers or min(Config.MAX_WORKERS, n_workers))
        self._pending: Dict[Future, Tuple[int, int]] = {}
        self._start = time.perf_counter()
        self._seq = 0

    def dispatch(self, worker: int, task: Task, version: int = 0) -> None:
        self._pending[self._pool.submit(task)] = (worker, version)

    def next_event(self) -> ReportEvent:
        done, _ = wait(list(self._pending), return_when=FIRST_COMPLETED)
        future = min(done, key=lambda f: self._pending[f][0])
        worker, version = self._pending.pop(future)
        x, ok = future.result()
        self._seq += 1
        return ReportEvent(worker, time.perf_counter() - self._start, self._seq, x, ok, version)

    def close(self) -> None:
        for future in self._pending:
            future.cancel()
        self._pool.shutdown(wait=True)


# ----------------------------------------------------------------------
# Coordinator
# ----------------------------------------------------------------------
def run_async(
    subproblems: Sequence[Subproblem],
    cfg: AsyncConfig = AsyncConfig(),
    truth: Optional[ModelVector] = None,
) -> Tuple[ModelVector, AdmmTrace]:
    """
    Asynchronous consensus ADMM

    ``cfg.admm.max_outer`` bounds the number of global updates. After each
    update the reporters get a fresh (z, u_j, rho) assignment; the other
    workers keep computing on the values they were dispatched with.

    Raises:
        WorkerCrashError: when a parallel worker raises; the partial trace is attached
    """
    subproblems = list(subproblems)
    n_workers = len(subproblems)
    if not 1 <= cfg.n_a <= n_workers:
        raise ValueError(f"n_a={cfg.n_a} must lie in [1, {n_workers}]")
    admm_cfg = cfg.admm

    start = time.perf_counter()
    weights = [sub.weight for sub in subproblems]
    state = ConsensusState.initial(reference_model(subproblems), n_workers, admm_cfg.rho0)
    trace = AdmmTrace(columns=ASYNC_COLUMNS)
    first_task = [True] * n_workers

    if cfg.scheduler == "simulated":
        scheduler = SimulatedScheduler(parse_latencies(cfg.latency, n_workers), cfg.seed)
    else:
        scheduler = ParallelScheduler(n_workers)

    def assign(j: int) -> None:
        # value copies: the task sees the state as of dispatch
        sub, z, u, rho, x_prev = subproblems[j], state.z.copy(), state.u[j].copy(), state.rho, state.x[j].copy()
        augmented = not (admm_cfg.init == "local" and first_task[j])
        first_task[j] = False
        scheduler.dispatch(j, lambda: local_solve(sub, z, u, rho, admm_cfg.inner, x_prev, augmented), state.iter)

    reporters: List[int] = []
    reports = 0
    inner_ok = True
    try:
        for j in range(n_workers):
            assign(j)

        while state.iter < admm_cfg.max_outer:
            try:
                event = scheduler.next_event()
            except Exception as exc:
                trace.status = SolverStatus.FAILED.value
                raise WorkerCrashError(f"Worker crashed after {state.iter} global updates: {exc}", trace) from exc
            reports += 1
            state.x[event.worker] = event.x
            inner_ok = inner_ok and event.ok
            reporters.append(event.worker)
            logger.debug("Report from worker %s at t=%.4f (version %s)", event.worker, event.time, event.version)

            overdue = [j for j in range(n_workers) if state.staleness[j] >= cfg.k_a and j not in reporters]
            if len(reporters) < cfg.n_a or overdue:
                continue

            rho = state.rho
            z_prev = state.z
            if cfg.z_update == "reporters":
                state.z = z_step([state.x[j] for j in reporters], [state.u[j] for j in reporters],
                                 [weights[j] for j in reporters], rho)
            else:
                state.z = z_step(state.x, state.u, weights, rho)
            for j in reporters:
                state.u[j] = u_step(state.u[j], state.x[j], state.z, weights[j], rho)
            for j in range(n_workers):
                state.staleness[j] = 0 if j in reporters else state.staleness[j] + 1
            state.iter += 1
            max_staleness = int(np.max(state.staleness))
            if max_staleness > cfg.k_a:
                raise AssertionError(f"Staleness {max_staleness} exceeds k_a={cfg.k_a}")

            r_norm, s_norm = residuals(state, z_prev, weights)
            trace.append(AdmmRecord(
                iter=state.iter,
                time_s=time.perf_counter() - start,
                misfit=total_misfit(subproblems, state.z),
                relerr=relative_error(state.z, truth),
                r_norm=r_norm,
                s_norm=s_norm,
                rho=rho,
                updates=reports,
                reporter_set=tuple(sorted(reporters)),
                max_staleness=max_staleness,
                inner_ok=inner_ok,
            ))
            logger.info("Async update %s: reporters=%s misfit=%.6e r=%.3e s=%.3e rho=%.3e",
                        state.iter, sorted(reporters), trace.last.misfit, r_norm, s_norm, rho)

            eps_pri, eps_dual = tolerances(state, weights, admm_cfg)
            if r_norm <= eps_pri and s_norm <= eps_dual:
                trace.status = SolverStatus.CONVERGED.value
                break
            if admm_cfg.adaptive:
                state.rho = adapt_rho(rho, r_norm, s_norm, admm_cfg)

            finished, reporters, inner_ok = reporters, [], True
            if state.iter < admm_cfg.max_outer:
                for j in finished:
                    assign(j)
    finally:
        scheduler.close()

    return state.z, trace

import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, NonNegativeInt, PositiveInt

from rcsopt.core import (
    BlockPartition,
    CompositeOracle,
    RngState,
    check_vector,
    make_partition,
    uniform_block_index,
)
from rcsopt.errors import DivergenceError, EmptyTraceError, RcsValidationError
from rcsopt.schedules import FixedHorizon, StepSchedule

log = logging.getLogger("rcsopt.solver")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))

# the cached residual is rebuilt from scratch every record_every * REFRESH_FACTOR iterations
REFRESH_FACTOR = 100

Probe = Callable[[np.ndarray], Tuple[float, float]]
# called with (k, x^k) at every recorded iteration
Monitor = Callable[[int, np.ndarray], None]


class SolverConfig(BaseModel):
    schedule: StepSchedule
    iterations: NonNegativeInt
    seed: int = Field(0, ge=0, lt=2**64)
    record_every: PositiveInt = 1
    # iterations per epoch; defaults to N for RCS and 1 for the full subgradient method
    epoch_size: Optional[PositiveInt] = None
    # envelope probe cadence, counted in records
    probe_every: Optional[PositiveInt] = None
    track_average_objective: bool = False


@dataclass
class IterationRecord:
    k: int
    epoch: float
    block: int
    alpha: float
    objective: float
    step_norm: float
    average_objective: Optional[float] = None
    weighted_average_objective: Optional[float] = None
    envelope_gradient_norm: Optional[float] = None
    envelope_gap: Optional[float] = None


@dataclass
class SolverTrace:
    method: str
    n_blocks: int
    iterations: int
    records: List[IterationRecord]
    initial_objective: float
    final_x: np.ndarray
    final_objective: float
    weighted_average: Optional[np.ndarray]
    plain_average: Optional[np.ndarray]
    best_x: np.ndarray
    best_objective: float
    wall_time: float
    workspace_bytes_per_iter: int
    alpha_sum: float = 0.0

    def same_path(self, other: "SolverTrace") -> bool:
        """Bitwise equality of everything except timing and method labels"""
        return (
            self.records == other.records
            and np.array_equal(self.final_x, other.final_x)
            and self.final_objective == other.final_objective
            and _arrays_equal(self.weighted_average, other.weighted_average)
            and _arrays_equal(self.plain_average, other.plain_average)
        )


def _arrays_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


def _check_schedule(problem: CompositeOracle, config: SolverConfig):
    schedule = config.schedule
    if isinstance(schedule, FixedHorizon):
        if config.iterations and schedule.horizon != config.iterations:
            raise RcsValidationError(
                f"fixed-horizon schedule built for T={schedule.horizon} but the run has T={config.iterations}"
            )
        if schedule.cap is None and not problem.convex:
            log.warning(
                "fixed-horizon steps on a weakly convex problem without a cap; κ₂ is unknown so the run is uncapped"
            )


def _iterate(
    problem: CompositeOracle,
    partition: BlockPartition,
    config: SolverConfig,
    x0,
    method: str,
    sample: Callable[[], int],
    epoch_size: int,
    probe: Optional[Probe],
    monitor: Optional[Monitor] = None,
) -> SolverTrace:
    if partition.d != problem.d:
        raise RcsValidationError(
            f"partition covers d={partition.d} but the problem has d={problem.d}"
        )
    x0 = check_vector(x0, problem.d)
    if not np.all(np.isfinite(x0)):
        raise RcsValidationError("x0 must be finite")
    _check_schedule(problem, config)

    schedule = config.schedule
    record_every = config.record_every
    refresh_every = record_every * REFRESH_FACTOR
    state = problem.init_state(x0)
    initial_objective = problem.objective_from_state(state)
    best_objective, best_x = initial_objective, state.x.copy()

    alpha_sum = 0.0
    weighted_sum = np.zeros(problem.d)
    plain_sum = np.zeros(problem.d)
    records: List[IterationRecord] = []

    log.info(
        f"{method}: N={partition.n_blocks}, T={config.iterations}, f(x0)={initial_objective:.6g}"
    )
    start = time.perf_counter()
    for k in range(config.iterations):
        if k and k % refresh_every == 0:
            cached = problem.objective_from_state(state)
            state = problem.refresh_state(state)
            fresh = problem.objective_from_state(state)
            if abs(cached - fresh) > 1e-8 * max(1.0, abs(fresh)):
                log.warning(f"residual drift at k={k}: cached f={cached}, fresh f={fresh}")

        alpha = schedule.step(k)
        alpha_sum += alpha
        weighted_sum += alpha * state.x
        plain_sum += state.x

        i = sample()
        block = partition.block(i)
        r = problem.block_subgradient(state, i, partition)
        x_block = state.x[block] - alpha * r
        if not np.all(np.isfinite(x_block)):
            raise DivergenceError(k)

        if k % record_every == 0:
            objective = problem.objective_from_state(state)
            if not math.isfinite(objective):
                raise DivergenceError(k)
            if objective < best_objective:
                best_objective, best_x = objective, state.x.copy()
            record = IterationRecord(
                k=k,
                epoch=k / epoch_size,
                block=i,
                alpha=alpha,
                objective=objective,
                step_norm=alpha * float(np.linalg.norm(r)),
            )
            if config.track_average_objective:
                record.average_objective = problem.objective(plain_sum / (k + 1))
                record.weighted_average_objective = problem.objective(weighted_sum / alpha_sum)
            if (
                probe is not None
                and config.probe_every
                and len(records) % config.probe_every == 0
            ):
                record.envelope_gradient_norm, record.envelope_gap = probe(state.x)
            if monitor is not None:
                monitor(k, state.x)
            log.debug(f"k={k} block={i} alpha={alpha:.4g} f={objective:.6g}")
            records.append(record)

        problem.state_update(state, i, x_block, partition)

    wall_time = time.perf_counter() - start
    final_objective = problem.objective_from_state(state)
    if not math.isfinite(final_objective):
        raise DivergenceError(config.iterations)
    if final_objective < best_objective:
        best_objective, best_x = final_objective, state.x.copy()

    iterations = config.iterations
    log.info(
        f"{method}: finished {iterations} iterations in {wall_time:.3f}s, f={final_objective:.6g}"
    )
    return SolverTrace(
        method=method,
        n_blocks=partition.n_blocks,
        iterations=iterations,
        records=records,
        initial_objective=initial_objective,
        final_x=state.x,
        final_objective=final_objective,
        weighted_average=weighted_sum / alpha_sum if iterations else None,
        plain_average=plain_sum / iterations if iterations else None,
        best_x=best_x,
        best_objective=best_objective,
        wall_time=wall_time,
        workspace_bytes_per_iter=problem.workspace_bytes(partition.max_block_size),
        alpha_sum=alpha_sum,
    )


def rcs_run(
    problem: CompositeOracle,
    partition: BlockPartition,
    config: SolverConfig,
    x0,
    probe: Optional[Probe] = None,
    monitor: Optional[Monitor] = None,
) -> SolverTrace:
    """Randomized coordinate subgradient method.

    Each iteration samples a block uniformly, computes that block of the subgradient from
    the cached residual, moves only that block and corrects the residual.
    """
    rng = RngState(config.seed)
    n_blocks = partition.n_blocks
    return _iterate(
        problem,
        partition,
        config,
        x0,
        method="rcs",
        sample=lambda: uniform_block_index(rng, n_blocks),
        epoch_size=config.epoch_size or n_blocks,
        probe=probe,
        monitor=monitor,
    )


def subgrad_run(
    problem: CompositeOracle,
    config: SolverConfig,
    x0,
    probe: Optional[Probe] = None,
    monitor: Optional[Monitor] = None,
) -> SolverTrace:
    """Full subgradient method, every iteration updates all coordinates (one epoch)"""
    return _iterate(
        problem,
        make_partition(problem.d, 1),
        config,
        x0,
        method="subgrad",
        sample=lambda: 0,
        epoch_size=config.epoch_size or 1,
        probe=probe,
        monitor=monitor,
    )


def weighted_average_iterate(trace: SolverTrace) -> np.ndarray:
    """Σ α_j x^j / Σ α_j over the iterates at which a step was taken"""
    if trace.weighted_average is None:
        raise EmptyTraceError("trace has no iterations to average")
    return trace.weighted_average


def plain_average_iterate(trace: SolverTrace) -> np.ndarray:
    if trace.plain_average is None:
        raise EmptyTraceError("trace has no iterations to average")
    return trace.plain_average

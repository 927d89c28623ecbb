"""One worker's epoch: budgeted SGD over its shard.

A worker steps until its budget is spent.  Budgets stop on virtual time, on
an iteration cap, or only once both are exhausted.  Step-time accounting: a
step counts iff the running sum of its cost and all earlier costs stays
within the time budget.
"""

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .data import Shard
from .problem import StepSchedule

__all__ = ["WorkerBudget", "WorkerReport", "run_worker_epoch", "continue_idle_updates"]

LAST_ITERATE = "last_iterate"
RUNNING_AVERAGE = "running_average"

StepCost = Union[float, Callable[[int], np.ndarray]]

_CHUNK = 512


@dataclass(frozen=True)
class WorkerBudget:
    stop_rule: str
    time_budget: float | None = None
    iteration_cap: int | None = None

    @classmethod
    def by_time(cls, seconds: float) -> "WorkerBudget":
        return cls("time_only", time_budget=seconds)

    @classmethod
    def by_iterations(cls, cap: int) -> "WorkerBudget":
        return cls("iterations_only", iteration_cap=cap)

    @classmethod
    def until_both_spent(cls, seconds: float, cap: int) -> "WorkerBudget":
        return cls("both_exhausted", time_budget=seconds, iteration_cap=cap)

    def __post_init__(self):
        if self.stop_rule not in ("time_only", "iterations_only", "both_exhausted"):
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")
        if self.stop_rule in ("time_only", "both_exhausted"):
            if self.time_budget is None or self.time_budget < 0:
                raise ValueError("time budget must be >= 0")
        if self.stop_rule in ("iterations_only", "both_exhausted"):
            if self.iteration_cap is None or self.iteration_cap < 0:
                raise ValueError("iteration cap must be >= 0")


@dataclass
class WorkerReport:
    """What a worker hands back after an epoch."""

    worker: int
    epoch: int
    iterate: np.ndarray
    n_steps: int
    finish_time: float
    output: str
    status: str = "ok"


def _constant_steps_within(cost: float, budget: float) -> int:
    # tolerate float rounding when budget is an exact multiple of cost
    ratio = budget / cost
    return int(np.floor(ratio * (1.0 + 4e-12) + 1e-9))


def _draw_until_exceeds(cost_fn, budget: float) -> tuple[int, float]:
    """Count leading step costs whose running sum stays within budget."""
    q = 0
    elapsed = 0.0
    while True:
        chunk = np.asarray(cost_fn(_CHUNK), dtype=np.float64)
        if chunk.size == 0 or np.any(chunk <= 0):
            raise ValueError("step costs must be positive")
        cum = elapsed + np.cumsum(chunk)
        k = int(np.searchsorted(cum, budget, side="right"))
        if k > 0:
            q += k
            elapsed = float(cum[k - 1])
        if k < len(chunk):
            return q, elapsed


def _draw_exact(cost_fn, n: int) -> float:
    total = 0.0
    left = n
    while left > 0:
        take = min(left, 4096)
        chunk = np.asarray(cost_fn(take), dtype=np.float64)
        if np.any(chunk <= 0):
            raise ValueError("step costs must be positive")
        total += float(chunk.sum())
        left -= take
    return total


def _resolve_steps(budget: WorkerBudget, step_cost: StepCost) -> tuple[int, float]:
    """How many steps the budget admits, and the virtual time they take."""
    constant = isinstance(step_cost, (int, float))
    if constant and step_cost <= 0:
        raise ValueError("step cost must be positive")

    if budget.stop_rule == "iterations_only":
        q = budget.iteration_cap
        elapsed = q * step_cost if constant else _draw_exact(step_cost, q)
        return q, elapsed

    if constant:
        q_time = _constant_steps_within(step_cost, budget.time_budget)
        if budget.stop_rule == "time_only":
            return q_time, q_time * step_cost
        q = max(q_time, budget.iteration_cap)
        return q, q * step_cost

    q_time, elapsed = _draw_until_exceeds(step_cost, budget.time_budget)
    if budget.stop_rule == "time_only":
        return q_time, elapsed
    if budget.iteration_cap > q_time:
        elapsed += _draw_exact(step_cost, budget.iteration_cap - q_time)
        return budget.iteration_cap, elapsed
    return q_time, elapsed


def run_worker_epoch(
    shard: Shard,
    x0: np.ndarray,
    schedule: StepSchedule,
    budget: WorkerBudget,
    step_cost: StepCost,
    sample_rng: np.random.Generator,
    output: str = LAST_ITERATE,
    worker: int = 0,
    epoch: int = 0,
    schedule_offset: int = 0,
) -> WorkerReport:
    """Run one budgeted SGD epoch over the shard, starting from x0.

    Samples are drawn uniformly with replacement from the shard.  The iterate
    handed back is either the last one or the mean of all iterates from x0
    through the final step, per the output mode.  A non-finite iterate stops
    the epoch with a diverged status instead of raising.
    """
    if output not in (LAST_ITERATE, RUNNING_AVERAGE):
        raise ValueError(f"unknown output mode {output!r}")

    q, elapsed = _resolve_steps(budget, step_cost)
    feats = shard.features
    labels = shard.labels
    if x0.shape != (feats.shape[1],):
        raise ValueError("x0 dimension does not match the shard")

    x = np.array(x0, dtype=np.float64)
    averaging = output == RUNNING_AVERAGE
    acc = x.copy() if averaging else None

    idx = sample_rng.integers(0, len(feats), size=q)
    rates = schedule.rates(schedule_offset, q)
    status = "ok"
    done = 0
    for k in range(q):
        i = idx[k]
        b = feats[i]
        r = b @ x - labels[i]
        if not math.isfinite(r):
            status = "diverged"
            break
        x -= (2.0 * rates[k] * r) * b
        if averaging:
            acc += x
        done += 1
    if status == "ok" and not np.all(np.isfinite(x)):
        status = "diverged"

    out = acc / (done + 1) if averaging else x
    return WorkerReport(
        worker=worker,
        epoch=epoch,
        iterate=out,
        n_steps=done,
        finish_time=elapsed,
        output=output,
        status=status,
    )


def continue_idle_updates(
    report: WorkerReport,
    shard: Shard,
    schedule: StepSchedule,
    idle_time: float,
    step_cost: StepCost,
    sample_rng: np.random.Generator,
) -> WorkerReport:
    """Keep stepping from a finished epoch's iterate while the worker idles.

    The schedule picks up where the epoch left off, so the extra steps behave
    as a continuation of the same recursion.
    """
    if report.status != "ok":
        raise ValueError("cannot continue a diverged epoch")
    return run_worker_epoch(
        shard,
        report.iterate,
        schedule,
        WorkerBudget.by_time(idle_time),
        step_cost,
        sample_rng,
        output=LAST_ITERATE,
        worker=report.worker,
        epoch=report.epoch,
        schedule_offset=report.n_steps,
    )

"""Virtual-clock simulation of full distributed runs.

Wall-clock accounting per scheme:
  anytime       every epoch costs the fixed compute window plus the realized
                master waiting time (capped by the waiting budget)
  classic_sync  every epoch costs the latest arrival; a worker that never
                responds stalls the run
  fnb           workers run a fixed pass; the epoch costs the arrival of the
                last update the master keeps after dropping the slowest

All draws come from named streams keyed by (seed, purpose, worker, epoch),
so two plans with the same seed see identical per-worker timing and sampling
sequences regardless of scheme.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as streams
from .combine import CombineRule, EpochResult, apply_waiting_deadline, combine_weights, fuse, generalized_blend
from .data import Dataset, build_assignment, worker_shard
from .latency import LatencyModel
from .problem import StepSchedule, normalized_error
from .worker import LAST_ITERATE, WorkerBudget, continue_idle_updates, run_worker_epoch

__all__ = ["SimulationPlan", "RunTrace", "simulate_run", "compare_schemes", "SchemeComparison"]

log = logging.getLogger(__name__)

SCHEMES = ("anytime", "classic_sync", "fnb")


@dataclass(frozen=True)
class SimulationPlan:
    scheme: str
    n_workers: int
    redundancy: int
    epochs: int
    schedule: StepSchedule
    latency: tuple[LatencyModel, ...]
    seed: int
    time_budget: float = 0.0
    waiting_budget: float = 0.0
    rule: CombineRule = field(default_factory=CombineRule.work_proportional)
    drop: int = 0
    generalized: bool = False
    output: str = LAST_ITERATE
    sampling: str = "shard"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.n_workers < 1 or self.epochs < 1:
            raise ValueError("need at least one worker and one epoch")
        if len(self.latency) != self.n_workers:
            raise ValueError("need one latency model per worker")
        if self.scheme == "anytime":
            if self.time_budget <= 0:
                raise ValueError("anytime runs need a positive time budget")
            if self.waiting_budget < 0:
                raise ValueError("waiting budget must be >= 0")
        if self.generalized and self.scheme != "anytime":
            raise ValueError("idle-time continuation only applies to the anytime scheme")
        if self.scheme == "fnb" and not 0 <= self.drop < self.n_workers:
            raise ValueError("fnb drop count must be in [0, n_workers)")
        if self.sampling not in ("shard", "global"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


@dataclass
class RunTrace:
    scheme: str
    epochs: list[EpochResult]
    errors: list[float]
    times: list[float]
    step_counts: np.ndarray
    stalled: bool = False

    def time_to_threshold(self, threshold: float) -> float:
        """Virtual time of the first epoch at or below the error threshold."""
        for err, t in zip(self.errors, self.times):
            if err <= threshold:
                return t
        return math.inf


def simulate_run(plan: SimulationPlan, dataset: Dataset, x0: np.ndarray | None = None) -> RunTrace:
    """Run one scheme end to end on the virtual clock."""
    n = plan.n_workers
    table = build_assignment(n, plan.redundancy)
    if plan.sampling == "global":
        full = worker_shard(dataset, build_assignment(1, 0), 0)
        shards = [full] * n
    else:
        shards = [worker_shard(dataset, table, v) for v in range(n)]
    x_star = dataset.solution()
    x = np.zeros(dataset.dim) if x0 is None else np.array(x0, dtype=np.float64)
    starts = [x.copy() for _ in range(n)]

    results: list[EpochResult] = []
    errors: list[float] = []
    times: list[float] = []
    counts = np.zeros((plan.epochs, n), dtype=np.int64)
    clock = 0.0
    stalled = False

    for t in range(1, plan.epochs + 1):
        if any(m.persistent for m in plan.latency) and plan.scheme == "classic_sync":
            stalled = True
            log.warning("classic sync epoch %d waits forever on a silent worker", t)
            break

        reports = {}
        slacks = {}
        arrivals = {}
        cost_fns = {}
        for v in range(n):
            model = plan.latency[v]
            if model.persistent:
                continue
            lat_rng = streams.stream(plan.seed, streams.COMPUTE, v, t)
            cost_fn = _cost_fn(model, lat_rng)
            cost_fns[v] = cost_fn
            if plan.scheme == "anytime":
                budget = WorkerBudget.by_time(plan.time_budget)
            else:
                budget = WorkerBudget.by_iterations(len(shards[v]))
            rep = run_worker_epoch(
                shards[v],
                starts[v] if plan.generalized else x,
                plan.schedule,
                budget,
                cost_fn,
                streams.stream(plan.seed, streams.SAMPLE, v, t),
                output=plan.output,
                worker=v,
                epoch=t,
            )
            counts[t - 1, v] = rep.n_steps
            up_delay = model.comm_delay(streams.stream(plan.seed, streams.COMM, v, t))
            slacks[v] = up_delay
            arrivals[v] = rep.finish_time + up_delay
            if rep.status != "ok":
                log.warning("worker %d diverged in epoch %d; its update is discarded", v, t)
                continue
            reports[v] = rep

        received, cost = _receive(plan, reports, slacks, arrivals)
        if not received:
            if all(m.persistent for m in plan.latency):
                raise RuntimeError("every worker is silent; the run cannot make progress")
            log.warning("epoch %d received no updates; carrying the iterate forward", t)
            weights_full = np.zeros(n)
            total_q = 0
        else:
            recv_reports = [reports[v] for v in received]
            if plan.scheme == "anytime":
                weights = combine_weights(recv_reports, plan.rule)
            else:
                # classic waits for everyone; fnb already dropped the slowest
                weights = combine_weights(recv_reports, CombineRule.uniform())
            x = fuse(recv_reports, weights)
            weights_full = np.zeros(n)
            for v, w in zip(received, weights):
                weights_full[v] = w
            kept = [v for v, w in zip(received, weights) if w > 0]
            total_q = int(sum(reports[v].n_steps for v in kept))
            received = kept

        clock += cost
        err = normalized_error(dataset.features, x, x_star)
        results.append(EpochResult(t, x.copy(), received, weights_full, total_q))
        errors.append(err)
        times.append(clock)

        if plan.generalized:
            waiting = cost - plan.time_budget
            for v, rep in reports.items():
                down_delay = plan.latency[v].comm_delay(
                    streams.stream(plan.seed, streams.COMM, v, t, 1)
                )
                idle = continue_idle_updates(
                    rep,
                    shards[v],
                    plan.schedule,
                    waiting + down_delay,
                    cost_fns[v],
                    streams.stream(plan.seed, streams.SAMPLE, v, t, 1),
                )
                if total_q > 0:
                    starts[v] = generalized_blend(x, idle.iterate, total_q, idle.n_steps)
                else:
                    starts[v] = x.copy()

    return RunTrace(plan.scheme, results, errors, times, counts, stalled)


def _cost_fn(model: LatencyModel, lat_rng: np.random.Generator):
    if model.compute.kind == "constant":
        # exact arithmetic instead of running-sum drift
        return model.slowdown * model.compute.params[0]
    return lambda k: model.step_times(lat_rng, k)


def _receive(plan, reports, slacks, arrivals):
    """Received worker set and the epoch's wall-clock cost."""
    n = plan.n_workers
    responsive = sorted(reports)

    if plan.scheme == "anytime":
        received = [responsive[i] for i in apply_waiting_deadline(
            [slacks[v] for v in responsive], plan.waiting_budget)]
        if len(slacks) < n:
            waiting = plan.waiting_budget
        else:
            waiting = min(plan.waiting_budget, max(slacks.values(), default=0.0))
        return received, plan.time_budget + waiting

    if plan.scheme == "classic_sync":
        cost = max(arrivals.values(), default=0.0)
        return responsive, cost

    keep = min(n - plan.drop, len(responsive))
    order = sorted(responsive, key=lambda v: arrivals[v])[:keep]
    cost = arrivals[order[-1]] if order else 0.0
    return sorted(order), cost


@dataclass
class SchemeComparison:
    traces: dict[str, RunTrace]

    def times_to(self, threshold: float) -> dict[str, float]:
        return {k: tr.time_to_threshold(threshold) for k, tr in self.traces.items()}


def compare_schemes(
    named_plans: list[tuple[str, SimulationPlan]],
    dataset: Dataset,
    x0: np.ndarray | None = None,
) -> SchemeComparison:
    """Run several plans on a shared dataset under common random numbers."""
    if not named_plans:
        raise ValueError("nothing to compare")
    seeds = {p.seed for _, p in named_plans}
    sizes = {p.n_workers for _, p in named_plans}
    if len(seeds) != 1 or len(sizes) != 1:
        raise ValueError("compared plans must share seed and worker count")
    traces = {}
    for name, plan in named_plans:
        if name in traces:
            raise ValueError(f"duplicate plan name {name!r}")
        traces[name] = simulate_run(plan, dataset, x0)
    return SchemeComparison(traces)

"""Closed-form convergence and concentration bounds, plus Monte Carlo checks.

The bounds apply to the fused running-average iterate after one round in
which worker v performs q_v steps with the decreasing schedule and uniform
sampling, and the master mixes with weights lam summing to one.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import rng as streams
from .data import Dataset, Shard
from .problem import ProblemConstants, StepSchedule, estimate_constants, mean_loss
from .worker import RUNNING_AVERAGE, WorkerBudget, run_worker_epoch

__all__ = [
    "BoundInputs",
    "expected_distance_bound",
    "variance_bound",
    "high_probability_bound",
    "optimal_weights",
    "monte_carlo_validate",
    "ValidationReport",
]


@dataclass(frozen=True)
class BoundInputs:
    constants: ProblemConstants
    weights: np.ndarray
    step_counts: np.ndarray
    start_gap: float = 0.0
    confidence: float | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        q = np.asarray(self.step_counts, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "step_counts", q)
        if w.shape != q.shape or w.ndim != 1 or len(w) == 0:
            raise ValueError("weights and step_counts must be matching 1-d vectors")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to one")
        if np.any(q < 1):
            raise ValueError("every step count must be >= 1")
        if self.start_gap < 0:
            raise ValueError("start gap must be >= 0")
        if self.confidence is not None and not 0 < self.confidence <= 1:
            raise ValueError("confidence must lie in (0, 1]")


def expected_distance_bound(inp: BoundInputs) -> float:
    """Upper bound on the expected objective gap of the fused average."""
    c = inp.constants
    per = inp.start_gap + c.smoothness * c.radius**2 + 2.0 * c.noise_bound * c.radius * np.sqrt(
        inp.step_counts
    )
    return float(np.sum(inp.weights / inp.step_counts * per))


def variance_bound(inp: BoundInputs) -> float:
    """Upper bound on the variance of the fused average's objective gap."""
    c = inp.constants
    scale = 2.0 * c.radius**2 * (c.grad_bound**2 + 2.0 * c.noise_bound**2)
    return float(scale * np.sum(inp.weights**2 / inp.step_counts))


def high_probability_bound(inp: BoundInputs) -> float:
    """Deviation radius of the objective gap around its mean.

    The gap exceeds its mean by more than the returned value with probability
    at most `confidence`.  At confidence 1 the radius is zero.
    """
    if inp.confidence is None:
        raise ValueError("confidence level is required")
    c = inp.constants
    delta = inp.confidence
    if delta == 1.0:
        return 0.0
    lead = max(inp.weights / inp.step_counts) * 2.0 * c.grad_bound * c.radius * (
        c.grad_bound / c.noise_bound + 2.0
    )
    lg = math.log(1.0 / delta)
    spread = float(
        np.sum(inp.weights**2 / inp.step_counts)
        * c.noise_bound**2
        * c.radius**2
        * (c.grad_bound**2 / c.noise_bound**2 + 2.0)
    )
    return lead * lg * math.sqrt(1.0 + 36.0 * spread / lg)


def optimal_weights(step_counts: np.ndarray) -> np.ndarray:
    """Weights minimizing the variance bound: proportional to step counts."""
    q = np.asarray(step_counts, dtype=np.float64)
    if q.ndim != 1 or len(q) == 0 or np.any(q < 1):
        raise ValueError("step counts must be a 1-d vector of values >= 1")
    return q / q.sum()


@dataclass
class ProfileStats:
    step_counts: tuple[int, ...]
    total: int
    n_trials: int
    mean_gap: float
    var_gap: float
    mean_bound: float
    var_bound: float
    deviation_bound: float
    tail_fraction: float


@dataclass
class ValidationReport:
    constants: ProblemConstants
    start_gap: float
    profiles: list[ProfileStats]
    variance_slope: float
    confidence: float

    def pooled_tail_fraction(self) -> float:
        hits = sum(p.tail_fraction * p.n_trials for p in self.profiles)
        return hits / sum(p.n_trials for p in self.profiles)


def monte_carlo_validate(
    dataset: Dataset,
    profiles: list[tuple[int, ...]],
    trials: int,
    seed: int,
    x0: np.ndarray | None = None,
    constants: ProblemConstants | None = None,
    confidence: float = 0.1,
) -> ValidationReport:
    """Empirically check the bounds on a small problem.

    Every trial runs each worker for its fixed step count from x0 over the
    whole dataset, fuses the running averages with work-proportional weights,
    and records the objective gap.  Constants default to conservative
    estimates around x0.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    x_star = dataset.solution()
    if x0 is None:
        x0 = np.zeros(dataset.dim)
    f_star = mean_loss(x_star, dataset.features, dataset.labels)
    start_gap = mean_loss(x0, dataset.features, dataset.labels) - f_star

    if constants is None:
        radius = 2.0 * max(float(np.linalg.norm(x0 - x_star)), 1e-6)
        constants = estimate_constants(dataset.features, dataset.labels, x0, radius, seed=seed)
    schedule = StepSchedule.decreasing(constants)
    shard = Shard(dataset.features, dataset.labels)

    stats = []
    for p_idx, q_profile in enumerate(profiles):
        q = np.array(q_profile, dtype=np.int64)
        lam = optimal_weights(q)
        gaps = np.empty(trials)
        for i in range(trials):
            fused = np.zeros(dataset.dim)
            for v, qv in enumerate(q):
                rep = run_worker_epoch(
                    shard,
                    x0,
                    schedule,
                    WorkerBudget.by_iterations(int(qv)),
                    1.0,
                    streams.stream(seed, streams.TRIAL, p_idx, i, v),
                    output=RUNNING_AVERAGE,
                )
                fused += lam[v] * rep.iterate
            gaps[i] = mean_loss(fused, dataset.features, dataset.labels) - f_star

        inp = BoundInputs(constants, lam, q, start_gap=start_gap, confidence=confidence)
        dev = high_probability_bound(inp)
        mean_gap = float(gaps.mean())
        stats.append(
            ProfileStats(
                step_counts=tuple(int(v) for v in q),
                total=int(q.sum()),
                n_trials=trials,
                mean_gap=mean_gap,
                var_gap=float(gaps.var(ddof=1)),
                mean_bound=expected_distance_bound(inp),
                var_bound=variance_bound(inp),
                deviation_bound=dev,
                tail_fraction=float(np.mean(gaps - mean_gap > dev)),
            )
        )

    totals = np.log([s.total for s in stats])
    variances = np.log([max(s.var_gap, 1e-300) for s in stats])
    if len(stats) > 1:
        slope = float(np.polyfit(totals, variances, 1)[0])
    else:
        slope = math.nan
    return ValidationReport(constants, start_gap, stats, slope, confidence)

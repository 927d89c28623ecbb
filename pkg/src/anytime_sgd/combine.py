"""Master-side fusion of worker iterates."""

import logging
from dataclasses import dataclass

import numpy as np

from .worker import WorkerReport

__all__ = [
    "CombineRule",
    "EpochResult",
    "combine_weights",
    "fuse",
    "apply_waiting_deadline",
    "generalized_blend",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CombineRule:
    """How to weight received iterates.

    work_proportional  weight by step count q_v / sum q
    uniform            equal weights
    fastest_k          uniform over the n - drop earliest finishers, zero for the rest
    single_fastest     all weight on the earliest finisher
    """

    kind: str
    drop: int = 0

    @classmethod
    def work_proportional(cls) -> "CombineRule":
        return cls("work_proportional")

    @classmethod
    def uniform(cls) -> "CombineRule":
        return cls("uniform")

    @classmethod
    def fastest_k(cls, drop: int) -> "CombineRule":
        if drop < 0:
            raise ValueError("drop count must be >= 0")
        return cls("fastest_k", drop=drop)

    @classmethod
    def single_fastest(cls) -> "CombineRule":
        return cls("single_fastest")

    def __post_init__(self):
        if self.kind not in ("work_proportional", "uniform", "fastest_k", "single_fastest"):
            raise ValueError(f"unknown combine rule {self.kind!r}")


def combine_weights(
    reports: list[WorkerReport],
    rule: CombineRule,
    finish_times: list[float] | None = None,
) -> np.ndarray:
    """Weights over the given reports, summing to one.

    finish_times overrides the per-report finish times for the order-based
    rules (the caller may want arrival rather than compute-finish order).
    """
    n = len(reports)
    if n == 0:
        raise ValueError("no reports to combine")
    if finish_times is None:
        finish_times = [r.finish_time for r in reports]
    if len(finish_times) != n:
        raise ValueError("need one finish time per report")

    if rule.kind == "uniform":
        return np.full(n, 1.0 / n)

    if rule.kind == "work_proportional":
        q = np.array([r.n_steps for r in reports], dtype=np.float64)
        total = q.sum()
        if total == 0:
            log.warning("all step counts are zero; falling back to uniform weights")
            return np.full(n, 1.0 / n)
        return q / total

    if rule.kind == "single_fastest":
        w = np.zeros(n)
        w[int(np.argmin(finish_times))] = 1.0
        return w

    keep = n - rule.drop
    if keep < 1:
        raise ValueError("fastest_k would drop every report")
    order = np.argsort(finish_times, kind="stable")[:keep]
    w = np.zeros(n)
    w[order] = 1.0 / keep
    return w


def fuse(reports: list[WorkerReport], weights: np.ndarray) -> np.ndarray:
    """Weighted combination of the reported iterates."""
    if len(reports) == 0:
        raise ValueError("no reports to fuse")
    if len(weights) != len(reports):
        raise ValueError("need one weight per report")
    dim = reports[0].iterate.shape
    out = np.zeros(dim)
    for w, r in zip(weights, reports):
        if r.iterate.shape != dim:
            raise ValueError("iterate dimensions disagree across reports")
        out += w * r.iterate
    return out


def apply_waiting_deadline(arrivals: list[float], waiting_budget: float) -> list[int]:
    """Indices of arrivals that make the master's waiting deadline.

    Arrival times are measured from the moment the master starts waiting;
    an infinite arrival marks a worker that never responds.
    """
    if waiting_budget < 0:
        raise ValueError("waiting budget must be >= 0")
    return [i for i, a in enumerate(arrivals) if a <= waiting_budget]


def generalized_blend(
    fused: np.ndarray,
    idle_iterate: np.ndarray,
    total_steps: float,
    idle_steps: float,
) -> np.ndarray:
    """Mix the master's fused vector with a worker's idle-time iterate.

    The fused vector gets weight total_steps / (idle_steps + total_steps), so
    a worker that did no idle work starts its next epoch exactly from the
    fused vector.
    """
    if total_steps <= 0:
        raise ValueError("total step count must be > 0")
    if idle_steps < 0:
        raise ValueError("idle step count must be >= 0")
    lam = total_steps / (idle_steps + total_steps)
    return lam * fused + (1.0 - lam) * idle_iterate


@dataclass
class EpochResult:
    """One fused epoch as recorded by the master."""

    epoch: int
    iterate: np.ndarray
    received: list[int]
    weights: np.ndarray
    total_steps: int

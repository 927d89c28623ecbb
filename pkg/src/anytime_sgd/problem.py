"""Least-squares objective, step-size schedule, and problem constants.

The model is linear regression with squared per-sample loss
``(b @ x - y) ** 2``.  The objective optimized by the distributed run is the
mean of per-sample losses, so a uniformly sampled per-sample gradient is an
unbiased estimate of the objective gradient.
"""

from dataclasses import dataclass

import numpy as np

from . import rng as streams

__all__ = [
    "DataSample",
    "ProblemConstants",
    "StepSchedule",
    "sample_loss",
    "sample_gradient",
    "mean_loss",
    "mean_gradient",
    "normalized_error",
    "estimate_constants",
]


@dataclass(frozen=True)
class DataSample:
    """One labeled example: a feature vector and a scalar target."""

    features: np.ndarray
    label: float


def sample_loss(x: np.ndarray, features: np.ndarray, label: float) -> float:
    """Squared residual of one sample at parameters x."""
    r = float(features @ x) - label
    return r * r


def sample_gradient(x: np.ndarray, features: np.ndarray, label: float) -> np.ndarray:
    """Gradient of the squared residual of one sample at x."""
    r = float(features @ x) - label
    return (2.0 * r) * features


def mean_loss(x: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
    """Average per-sample loss over a whole matrix of samples."""
    r = features @ x - labels
    return float(r @ r) / len(labels)


def mean_gradient(x: np.ndarray, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of mean_loss at x."""
    r = features @ x - labels
    return (2.0 / len(labels)) * (features.T @ r)


def normalized_error(features: np.ndarray, x: np.ndarray, x_star: np.ndarray) -> float:
    """Prediction-space distance ||A x - A x*|| / ||A x*||."""
    ref = float(np.linalg.norm(features @ x_star))
    if ref == 0.0:
        raise ValueError("reference predictions are all zero; error is undefined")
    return float(np.linalg.norm(features @ (x - x_star))) / ref


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness, domain, gradient, and noise constants used by schedules and bounds.

    smoothness   per-sample gradient Lipschitz constant
    radius       half-diameter of the region the iterates are assumed to stay in
    grad_bound   upper bound on any per-sample gradient norm in that region
    noise_bound  upper bound on the RMS deviation of per-sample gradients from
                 the mean gradient in that region
    """

    smoothness: float
    radius: float
    grad_bound: float
    noise_bound: float

    def __post_init__(self):
        if not (self.smoothness >= 0 and np.isfinite(self.smoothness)):
            raise ValueError("smoothness must be finite and >= 0")
        for name in ("radius", "grad_bound", "noise_bound"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be finite and > 0")
        if self.noise_bound > 2.0 * self.grad_bound + 1e-12:
            raise ValueError("noise_bound cannot exceed twice grad_bound")


@dataclass(frozen=True)
class StepSchedule:
    """Learning-rate schedule for one worker epoch.

    Decreasing mode uses rate 1 / (smoothness + sqrt(t + 1) * noise_bound / radius),
    which shrinks like 1/sqrt(t).  Constant mode uses a fixed rate.
    """

    kind: str
    constants: ProblemConstants | None = None
    rate: float | None = None

    @classmethod
    def decreasing(cls, constants: ProblemConstants) -> "StepSchedule":
        return cls(kind="decreasing", constants=constants)

    @classmethod
    def constant(cls, rate: float) -> "StepSchedule":
        if not (rate > 0 and np.isfinite(rate)):
            raise ValueError("rate must be finite and > 0")
        return cls(kind="constant", rate=rate)

    def __post_init__(self):
        if self.kind not in ("decreasing", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "decreasing" and self.constants is None:
            raise ValueError("decreasing schedule needs constants")
        if self.kind == "constant" and self.rate is None:
            raise ValueError("constant schedule needs a rate")

    def learning_rate(self, t: int) -> float:
        """Rate applied at within-epoch iteration t (t >= 0)."""
        if t < 0:
            raise ValueError("iteration index must be >= 0")
        if self.kind == "constant":
            return self.rate
        c = self.constants
        return 1.0 / (c.smoothness + np.sqrt(t + 1.0) * c.noise_bound / c.radius)

    def rates(self, start: int, count: int) -> np.ndarray:
        """Vector of rates for iterations start .. start + count - 1."""
        if start < 0 or count < 0:
            raise ValueError("start and count must be >= 0")
        if self.kind == "constant":
            return np.full(count, self.rate)
        t = np.arange(start, start + count, dtype=np.float64)
        c = self.constants
        return 1.0 / (c.smoothness + np.sqrt(t + 1.0) * c.noise_bound / c.radius)


def estimate_constants(
    features: np.ndarray,
    labels: np.ndarray,
    x_ref: np.ndarray,
    radius: float,
    seed: int = 0,
    n_points: int = 24,
    safety: float = 1.5,
) -> ProblemConstants:
    """Estimate schedule and bound constants from data.

    The smoothness constant is exact for squared loss: twice the largest
    squared feature norm.  Gradient and noise bounds are empirical maxima over
    points sampled in the ball of the given radius around x_ref (boundary
    points included, where both quantities peak), inflated by the safety
    factor.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if features.ndim != 2 or len(features) != len(labels):
        raise ValueError("features must be 2-d with one label per row")
    m, d = features.shape

    row_sq = np.einsum("ij,ij->i", features, features)
    smoothness = 2.0 * float(row_sq.max())

    gen = streams.stream(seed, streams.ESTIMATE)
    points = [x_ref]
    for i in range(n_points):
        u = gen.standard_normal(d)
        u /= np.linalg.norm(u)
        # bias toward the boundary; interior points add little
        scale = radius if i % 3 else radius * gen.uniform(0.2, 1.0)
        points.append(x_ref + scale * u)

    grad_bound = 0.0
    noise_bound = 0.0
    for x in points:
        resid = features @ x - labels
        grads = (2.0 * resid)[:, None] * features
        norms_sq = np.einsum("ij,ij->i", grads, grads)
        grad_bound = max(grad_bound, float(np.sqrt(norms_sq.max())))
        centered = grads - grads.mean(axis=0)
        noise_sq = float(np.einsum("ij,ij->i", centered, centered).mean())
        noise_bound = max(noise_bound, float(np.sqrt(noise_sq)))

    return ProblemConstants(
        smoothness=smoothness,
        radius=float(radius),
        grad_bound=safety * grad_bound,
        noise_bound=safety * max(noise_bound, 1e-12),
    )

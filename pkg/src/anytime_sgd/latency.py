"""Step-time and message-delay models for simulated runs."""

from dataclasses import dataclass

import numpy as np

__all__ = ["Distribution", "LatencyModel", "sample_step_times", "default_heavy_tail"]


@dataclass(frozen=True)
class Distribution:
    """A positive draw family for step costs and message delays.

    kinds:
      constant:c                    every draw is c
      shifted_exponential:shift,rate  shift + Exp(rate), mean shift + 1/rate
      pareto:scale,shape            classical Pareto on [scale, inf),
                                    mean shape*scale/(shape-1) for shape > 1
      tail_mix:shift,rate,scale,shape,p  shifted exponential body, with
                                    probability p a Pareto tail draw instead
    """

    kind: str
    params: tuple[float, ...]

    @classmethod
    def constant(cls, value: float) -> "Distribution":
        if value <= 0:
            raise ValueError("constant delay must be > 0")
        return cls("constant", (value,))

    @classmethod
    def shifted_exponential(cls, shift: float, rate: float) -> "Distribution":
        if shift < 0 or rate <= 0:
            raise ValueError("need shift >= 0 and rate > 0")
        return cls("shifted_exponential", (shift, rate))

    @classmethod
    def pareto(cls, scale: float, shape: float) -> "Distribution":
        if scale <= 0 or shape <= 0:
            raise ValueError("need scale > 0 and shape > 0")
        return cls("pareto", (scale, shape))

    @classmethod
    def tail_mix(
        cls, shift: float, rate: float, scale: float, shape: float, tail_prob: float
    ) -> "Distribution":
        if not 0 <= tail_prob <= 1:
            raise ValueError("tail probability must be in [0, 1]")
        cls.shifted_exponential(shift, rate)
        cls.pareto(scale, shape)
        return cls("tail_mix", (shift, rate, scale, shape, tail_prob))

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.kind == "constant":
            return np.full(n, p[0])
        if self.kind == "shifted_exponential":
            return p[0] + rng.exponential(1.0 / p[1], size=n)
        if self.kind == "pareto":
            return p[0] * (1.0 + rng.pareto(p[1], size=n))
        if self.kind == "tail_mix":
            shift, rate, scale, shape, prob = p
            body = shift + rng.exponential(1.0 / rate, size=n)
            tail = scale * (1.0 + rng.pareto(shape, size=n))
            pick = rng.random(n) < prob
            return np.where(pick, tail, body)
        raise ValueError(f"unknown distribution kind {self.kind!r}")

    def mean(self) -> float:
        p = self.params
        if self.kind == "constant":
            return p[0]
        if self.kind == "shifted_exponential":
            return p[0] + 1.0 / p[1]
        if self.kind == "pareto":
            return np.inf if p[1] <= 1 else p[1] * p[0] / (p[1] - 1.0)
        shift, rate, scale, shape, prob = p
        body = shift + 1.0 / rate
        tail = np.inf if shape <= 1 else shape * scale / (shape - 1.0)
        return (1.0 - prob) * body + prob * tail


@dataclass(frozen=True)
class LatencyModel:
    """Per-worker timing behavior.

    slowdown scales compute draws only; a persistent worker computes but its
    messages never arrive.
    """

    compute: Distribution
    comm: Distribution
    slowdown: float = 1.0
    persistent: bool = False

    def __post_init__(self):
        if self.slowdown < 1.0:
            raise ValueError("slowdown must be >= 1")

    def step_times(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.slowdown * self.compute.draw(rng, n)

    def comm_delay(self, rng: np.random.Generator) -> float:
        return float(self.comm.draw(rng, 1)[0])


def sample_step_times(model: LatencyModel, rng: np.random.Generator, n: int) -> np.ndarray:
    return model.step_times(rng, n)


def default_heavy_tail(scale: float = 1.0) -> Distribution:
    """Heavy-tailed step-time family: exponential body, rare Pareto spikes.

    Tuned so about 4% of draws exceed 2.5x the median.
    """
    return Distribution.tail_mix(
        shift=1.0 * scale,
        rate=2.0 / scale,
        scale=4.0 * scale,
        shape=1.5,
        tail_prob=0.03,
    )

"""Flat key=value experiment configs and their resolution into run objects.

Keys use dotted sections (dataset.*, run.*, schedule.*, latency.*, validate.*).
Unknown keys are rejected.  A resolved config (defaults filled in) can be
written back out and re-parsed to reproduce the identical run.
"""

import math
from dataclasses import dataclass

import numpy as np

from .combine import CombineRule
from .data import Dataset, generate_synthetic, load_cache, load_csv
from .latency import Distribution, LatencyModel, default_heavy_tail
from .problem import ProblemConstants, StepSchedule, estimate_constants
from .simulate import SimulationPlan

__all__ = ["ConfigError", "parse_config", "resolve", "ExperimentSpec", "format_config"]


class ConfigError(ValueError):
    pass


_KNOWN = {
    "dataset.kind",
    "dataset.samples",
    "dataset.dim",
    "dataset.noise_std",
    "dataset.path",
    "dataset.label_column",
    "dataset.has_header",
    "dataset.standardize",
    "run.workers",
    "run.redundancy",
    "run.epochs",
    "run.time_budget",
    "run.waiting_budget",
    "run.seed",
    "run.output",
    "run.sampling",
    "schedule.kind",
    "schedule.rate",
    "schedule.smoothness",
    "schedule.noise_bound",
    "schedule.radius",
    "schedule.grad_bound",
    "schedule.estimate_radius",
    "latency.compute",
    "latency.comm",
    "latency.slowdowns",
    "latency.persistent",
    "schemes",
    "output.dir",
    "validate.dim",
    "validate.samples",
    "validate.noise_std",
    "validate.trials",
    "validate.profiles",
    "validate.confidence",
    "validate.start_distance",
}


def parse_config(text: str) -> dict[str, str]:
    """Parse key = value lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    for key in out:
        if key in _KNOWN:
            continue
        head, _, tail = key.rpartition(".")
        if head == "latency.compute" and tail.isdigit():
            continue
        raise ConfigError(f"unknown key {key!r}")
    return out


def format_config(pairs: dict[str, str]) -> str:
    return "".join(f"{k} = {pairs[k]}\n" for k in sorted(pairs))


def _get(pairs, key, default=None):
    if key in pairs:
        return pairs[key]
    if default is None:
        raise ConfigError(f"missing required key {key!r}")
    return default


def _get_int(pairs, key, default=None):
    v = _get(pairs, key, default)
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {v!r}") from None


def _get_float(pairs, key, default=None):
    v = _get(pairs, key, default)
    try:
        out = float(v)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {v!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{key}: must be finite")
    return out


def _get_bool(pairs, key, default):
    v = _get(pairs, key, default).lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {v!r}")


def parse_distribution(spec: str, key: str) -> Distribution:
    name, _, rest = spec.partition(":")
    args = []
    if rest:
        for part in rest.split(","):
            try:
                args.append(float(part))
            except ValueError:
                raise ConfigError(f"{key}: bad number {part!r} in {spec!r}") from None
    try:
        if name == "constant" and len(args) == 1:
            return Distribution.constant(args[0])
        if name == "shifted_exponential" and len(args) == 2:
            return Distribution.shifted_exponential(*args)
        if name == "pareto" and len(args) == 2:
            return Distribution.pareto(*args)
        if name == "tail_mix" and len(args) == 5:
            return Distribution.tail_mix(*args)
        if name == "heavy_tail" and len(args) in (0, 1):
            return default_heavy_tail(*args)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    raise ConfigError(f"{key}: unrecognized distribution {spec!r}")


def format_distribution(dist: Distribution) -> str:
    return dist.kind + ":" + ",".join(repr(p) for p in dist.params)


@dataclass
class ExperimentSpec:
    """A fully resolved simulation experiment."""

    dataset: Dataset
    schedule: StepSchedule
    plans: list[tuple[str, SimulationPlan]]
    resolved: dict[str, str]
    out_dir: str | None


def _build_dataset(pairs) -> Dataset:
    kind = _get(pairs, "dataset.kind")
    if kind == "synthetic":
        return generate_synthetic(
            _get_int(pairs, "dataset.samples"),
            _get_int(pairs, "dataset.dim"),
            _get_float(pairs, "dataset.noise_std"),
            _get_int(pairs, "run.seed"),
        )
    if kind == "csv":
        return load_csv(
            _get(pairs, "dataset.path"),
            label_column=_get_int(pairs, "dataset.label_column", "-1"),
            has_header=_get_bool(pairs, "dataset.has_header", "false"),
            standardize=_get_bool(pairs, "dataset.standardize", "true"),
        )
    if kind == "cache":
        return load_cache(_get(pairs, "dataset.path"))
    raise ConfigError(f"dataset.kind: unknown kind {kind!r}")


def _build_schedule(pairs, dataset: Dataset) -> StepSchedule:
    kind = _get(pairs, "schedule.kind", "decreasing")
    if kind == "constant":
        return StepSchedule.constant(_get_float(pairs, "schedule.rate"))
    if kind != "decreasing":
        raise ConfigError(f"schedule.kind: unknown kind {kind!r}")
    explicit = [k for k in ("schedule.smoothness", "schedule.noise_bound",
                            "schedule.radius", "schedule.grad_bound") if k in pairs]
    if len(explicit) == 4:
        constants = ProblemConstants(
            smoothness=_get_float(pairs, "schedule.smoothness"),
            radius=_get_float(pairs, "schedule.radius"),
            grad_bound=_get_float(pairs, "schedule.grad_bound"),
            noise_bound=_get_float(pairs, "schedule.noise_bound"),
        )
    elif explicit:
        raise ConfigError("give all four schedule constants or none")
    else:
        radius = _get_float(pairs, "schedule.estimate_radius", "0")
        x_ref = np.zeros(dataset.dim)
        if radius <= 0:
            radius = 2.0 * max(float(np.linalg.norm(x_ref - dataset.solution())), 1e-6)
        constants = estimate_constants(
            dataset.features, dataset.labels, x_ref, radius, seed=_get_int(pairs, "run.seed")
        )
    return StepSchedule.decreasing(constants)


def _build_latency(pairs, n_workers: int) -> tuple[LatencyModel, ...]:
    base = parse_distribution(_get(pairs, "latency.compute", "heavy_tail"), "latency.compute")
    comm = parse_distribution(_get(pairs, "latency.comm", "constant:0.01"), "latency.comm")
    raw_slow = _get(pairs, "latency.slowdowns", "1.0")
    slow = [float(s) for s in raw_slow.split(",")]
    if len(slow) == 1:
        slow = slow * n_workers
    if len(slow) != n_workers:
        raise ConfigError("latency.slowdowns: need one value, or one per worker")
    raw_persist = _get(pairs, "latency.persistent", "none")
    persistent: set[int] = set()
    if raw_persist != "none":
        for part in raw_persist.split(","):
            try:
                persistent.add(int(part))
            except ValueError:
                raise ConfigError(f"latency.persistent: bad worker id {part!r}") from None
    bad = [v for v in persistent if not 0 <= v < n_workers]
    if bad:
        raise ConfigError(f"latency.persistent: worker ids out of range: {bad}")
    models = []
    for v in range(n_workers):
        compute = base
        override = pairs.get(f"latency.compute.{v}")
        if override is not None:
            compute = parse_distribution(override, f"latency.compute.{v}")
        models.append(
            LatencyModel(compute=compute, comm=comm, slowdown=slow[v], persistent=v in persistent)
        )
    return tuple(models)


def _parse_rule(token: str, key: str) -> CombineRule:
    if token == "proportional":
        return CombineRule.work_proportional()
    if token == "uniform":
        return CombineRule.uniform()
    if token == "single_fastest":
        return CombineRule.single_fastest()
    if token.startswith("fastest_k:"):
        try:
            return CombineRule.fastest_k(int(token.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"{key}: bad drop count in {token!r}") from None
    raise ConfigError(f"{key}: unknown combine rule {token!r}")


def _build_plans(pairs, schedule, latency) -> list[tuple[str, SimulationPlan]]:
    n = _get_int(pairs, "run.workers")
    base = dict(
        n_workers=n,
        redundancy=_get_int(pairs, "run.redundancy", "0"),
        epochs=_get_int(pairs, "run.epochs"),
        schedule=schedule,
        latency=latency,
        seed=_get_int(pairs, "run.seed"),
        time_budget=_get_float(pairs, "run.time_budget", "1.0"),
        waiting_budget=_get_float(pairs, "run.waiting_budget", "0.25"),
        output=_get(pairs, "run.output", "last_iterate"),
        sampling=_get(pairs, "run.sampling", "shard"),
    )
    plans = []
    for token in _get(pairs, "schemes").split(","):
        token = token.strip()
        if not token:
            continue
        label = token.replace(":", "-")
        if token == "classic":
            plan = SimulationPlan(scheme="classic_sync", rule=CombineRule.uniform(), **base)
        elif token.startswith("fnb:"):
            try:
                drop = int(token.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"schemes: bad drop count in {token!r}") from None
            plan = SimulationPlan(scheme="fnb", drop=drop, rule=CombineRule.uniform(), **base)
        elif token.startswith("anytime:") or token.startswith("generalized:"):
            head, rule_token = token.split(":", 1)
            rule = _parse_rule(rule_token, "schemes")
            plan = SimulationPlan(
                scheme="anytime", rule=rule, generalized=head == "generalized", **base
            )
        else:
            raise ConfigError(f"schemes: unknown scheme {token!r}")
        plans.append((label, plan))
    if not plans:
        raise ConfigError("schemes: nothing to run")
    seen = set()
    for label, _ in plans:
        if label in seen:
            raise ConfigError(f"schemes: duplicate entry {label!r}")
        seen.add(label)
    return plans


def resolve(pairs: dict[str, str]) -> ExperimentSpec:
    """Build the dataset, schedule, and plans a config describes."""
    if "schemes" not in pairs:
        raise ConfigError("missing required key 'schemes'")
    dataset = _build_dataset(pairs)
    schedule = _build_schedule(pairs, dataset)
    n = _get_int(pairs, "run.workers")
    latency = _build_latency(pairs, n)
    plans = _build_plans(pairs, schedule, latency)

    resolved = dict(pairs)
    resolved.setdefault("run.redundancy", "0")
    resolved.setdefault("run.time_budget", "1.0")
    resolved.setdefault("run.waiting_budget", "0.25")
    resolved.setdefault("run.output", "last_iterate")
    resolved.setdefault("run.sampling", "shard")
    resolved.setdefault("latency.compute", "heavy_tail")
    resolved.setdefault("latency.comm", "constant:0.01")
    resolved.setdefault("latency.slowdowns", "1.0")
    resolved.setdefault("latency.persistent", "none")
    resolved.setdefault("schedule.kind", "decreasing")
    if schedule.kind == "decreasing":
        c = schedule.constants
        resolved["schedule.smoothness"] = repr(c.smoothness)
        resolved["schedule.noise_bound"] = repr(c.noise_bound)
        resolved["schedule.radius"] = repr(c.radius)
        resolved["schedule.grad_bound"] = repr(c.grad_bound)
        resolved.pop("schedule.estimate_radius", None)
    return ExperimentSpec(
        dataset=dataset,
        schedule=schedule,
        plans=plans,
        resolved=resolved,
        out_dir=pairs.get("output.dir"),
    )

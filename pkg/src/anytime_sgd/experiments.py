"""End-to-end experiment driver: configs in, metric CSVs out."""

import os

import numpy as np

from .bounds import ValidationReport, monte_carlo_validate
from .config import ConfigError, ExperimentSpec, format_config, parse_config, resolve
from .data import generate_synthetic
from .simulate import RunTrace, SchemeComparison, compare_schemes

__all__ = [
    "run_experiment",
    "emit_metrics",
    "preset_config",
    "run_bounds_validation",
    "PRESETS",
]

CSV_HEADER = "epoch,virtual_time_s,normalized_error,Q,n_received,scheme"


def emit_metrics(trace: RunTrace, label: str, path: str) -> None:
    """Write one scheme's per-epoch metrics as CSV."""
    lines = [CSV_HEADER]
    for res, err, t in zip(trace.epochs, trace.errors, trace.times):
        lines.append(
            f"{res.epoch},{t:.9g},{err:.9g},{res.total_steps},{len(res.received)},{label}"
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(spec: ExperimentSpec, out_dir: str | None = None) -> SchemeComparison:
    """Run every configured scheme and write CSVs plus a re-runnable manifest."""
    out = out_dir or spec.out_dir
    comparison = compare_schemes(spec.plans, spec.dataset)
    if out:
        os.makedirs(out, exist_ok=True)
        for label, _ in spec.plans:
            emit_metrics(comparison.traces[label], label, os.path.join(out, f"{label}.csv"))
        resolved = dict(spec.resolved)
        if out_dir:
            resolved["output.dir"] = out_dir
        with open(os.path.join(out, "manifest.cfg"), "w") as fh:
            fh.write(format_config(resolved))
    return comparison


def run_bounds_validation(pairs: dict[str, str], seed: int | None = None) -> ValidationReport:
    """Monte Carlo bound check described by the validate.* keys."""
    for key in ("validate.dim", "validate.samples", "validate.trials", "validate.profiles"):
        if key not in pairs:
            raise ConfigError(f"missing required key {key!r}")
    dim = int(pairs["validate.dim"])
    samples = int(pairs["validate.samples"])
    noise = float(pairs.get("validate.noise_std", "0.03"))
    trials = int(pairs["validate.trials"])
    confidence = float(pairs.get("validate.confidence", "0.1"))
    start_distance = float(pairs.get("validate.start_distance", "0"))
    if seed is None:
        seed = int(pairs.get("run.seed", "0"))

    profiles = []
    for group in pairs["validate.profiles"].split(";"):
        group = group.strip()
        if not group:
            continue
        try:
            if "x" in group:
                steps, count = group.split("x", 1)
                profiles.append((int(steps),) * int(count))
            else:
                profiles.append(tuple(int(q) for q in group.split(",")))
        except ValueError:
            raise ConfigError(f"validate.profiles: bad entry {group!r}") from None
    if not profiles:
        raise ConfigError("validate.profiles: nothing to run")

    dataset = generate_synthetic(samples, dim, noise, seed)
    x0 = None
    if start_distance > 0:
        x_star = dataset.solution()
        x0 = x_star + start_distance / np.sqrt(dim) * np.ones(dim)
    return monte_carlo_validate(dataset, profiles, trials, seed, x0=x0, confidence=confidence)


def _fig2_slowdowns() -> str:
    profile = [10000, 8500, 8000, 7500, 7250, 6800, 5500, 2000, 1500, 500]
    return ",".join(repr(profile[0] / q) for q in profile)


def preset_config(name: str, seed: int, out_dir: str) -> dict[str, str]:
    """Built-in experiment configs, parameterized by seed and output directory."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {', '.join(sorted(PRESETS))}")
    pairs = dict(PRESETS[name])
    pairs["run.seed"] = str(seed)
    pairs["output.dir"] = out_dir
    return pairs


PRESETS: dict[str, dict[str, str]] = {
    # ten workers with a fixed spread of per-epoch step counts; proportional
    # weighting against uniform weighting
    "fig2": {
        "dataset.kind": "synthetic",
        "dataset.samples": "10000",
        "dataset.dim": "100",
        "dataset.noise_std": "0.0316227766016838",
        "run.workers": "10",
        "run.redundancy": "0",
        "run.epochs": "10",
        "run.time_budget": "1.0",
        "run.waiting_budget": "0.2",
        "schedule.kind": "decreasing",
        "schedule.smoothness": "260.0",
        "schedule.noise_bound": "12000.0",
        "schedule.radius": "10.0",
        "schedule.grad_bound": "6000.0",
        "latency.compute": "constant:0.0001",
        "latency.comm": "constant:0.01",
        "latency.slowdowns": _fig2_slowdowns(),
        "schemes": "anytime:proportional,anytime:uniform",
    },
    # fixed-window scheme against a classic barrier under heavy-tailed step times
    "fig4": {
        "dataset.kind": "synthetic",
        "dataset.samples": "2000",
        "dataset.dim": "20",
        "dataset.noise_std": "0.0316227766016838",
        "run.workers": "10",
        "run.redundancy": "1",
        "run.epochs": "30",
        "run.time_budget": "0.6",
        "run.waiting_budget": "0.05",
        "schedule.kind": "constant",
        "schedule.rate": "0.0012",
        "latency.compute": "heavy_tail:0.001",
        "latency.comm": "constant:0.02",
        "latency.slowdowns": "1.0,1.06,1.11,1.17,1.22,1.28,1.33,1.39,1.44,1.5",
        "schemes": "anytime:proportional,classic",
    },
    # fixed-window scheme against drop-the-stragglers under heavy-tailed step times
    "fig5": {
        "dataset.kind": "synthetic",
        "dataset.samples": "2000",
        "dataset.dim": "20",
        "dataset.noise_std": "0.0316227766016838",
        "run.workers": "10",
        "run.redundancy": "2",
        "run.epochs": "30",
        "run.time_budget": "0.6",
        "run.waiting_budget": "0.05",
        "schedule.kind": "constant",
        "schedule.rate": "0.0012",
        "latency.compute": "heavy_tail:0.001",
        "latency.comm": "constant:0.02",
        "latency.slowdowns": "1.0,1.06,1.11,1.17,1.22,1.28,1.33,1.39,1.44,1.5",
        "latency.persistent": "7",
        "schemes": "anytime:proportional,fnb:8",
    },
    # does continuing through the communication window help
    "fig6": {
        "dataset.kind": "synthetic",
        "dataset.samples": "2000",
        "dataset.dim": "20",
        "dataset.noise_std": "0.0316227766016838",
        "run.workers": "10",
        "run.redundancy": "0",
        "run.epochs": "10",
        "run.time_budget": "0.3",
        "run.waiting_budget": "0.4",
        "schedule.kind": "constant",
        "schedule.rate": "0.0008",
        "latency.compute": "heavy_tail:0.001",
        "latency.comm": "constant:0.1",
        "schemes": "anytime:proportional,generalized:proportional",
    },
    # small problem whose bound behavior is cheap to sample
    "bounds-validate": {
        "validate.dim": "10",
        "validate.samples": "60",
        "validate.noise_std": "0.0316227766016838",
        "validate.trials": "200",
        "validate.profiles": "25x2;25x6;25x18;25x60;25x200",
        "validate.confidence": "0.1",
    },
}


def load_experiment(path: str) -> ExperimentSpec:
    with open(path) as fh:
        pairs = parse_config(fh.read())
    return resolve(pairs)

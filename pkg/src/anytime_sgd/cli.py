"""Command line entry point."""

import argparse
import logging
import os
import sys

from . import netrun
from .config import ConfigError, format_config, parse_config, resolve
from .data import save_cache
from .experiments import (
    PRESETS,
    preset_config,
    run_bounds_validation,
    run_experiment,
)

log = logging.getLogger(__name__)


def _setup_logging():
    level = os.environ.get("ATG_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_pairs(path: str) -> dict[str, str]:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _cmd_run(args) -> int:
    pairs = _load_pairs(args.config)
    spec = resolve(pairs)
    out = args.out or spec.out_dir
    comparison = run_experiment(spec, out)
    for label, trace in comparison.traces.items():
        last = trace.errors[-1] if trace.errors else float("nan")
        state = " (stalled)" if trace.stalled else ""
        print(f"{label}: {len(trace.errors)} epochs, final error {last:.6g}{state}")
    if out:
        print(f"metrics written to {out}")
    return 0


def _cmd_preset(args) -> int:
    pairs = preset_config(args.name, args.seed, args.out)
    os.makedirs(args.out, exist_ok=True)
    cfg_path = os.path.join(args.out, f"{args.name}.cfg")
    with open(cfg_path, "w") as fh:
        fh.write(format_config(pairs))
    print(f"config written to {cfg_path}")
    if args.name == "bounds-validate":
        report = run_bounds_validation(pairs)
        _print_validation(report)
        return 0
    spec = resolve(pairs)
    run_experiment(spec, args.out)
    print(f"metrics written to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    pairs = _load_pairs(args.config)
    report = run_bounds_validation(pairs)
    _print_validation(report)
    return 0


def _print_validation(report) -> None:
    c = report.constants
    print(
        f"constants: smoothness={c.smoothness:.6g} radius={c.radius:.6g} "
        f"grad_bound={c.grad_bound:.6g} noise_bound={c.noise_bound:.6g}"
    )
    print(f"start gap: {report.start_gap:.6g}")
    print("steps      mean_gap      mean_bound    var_gap       var_bound     tail_frac")
    for p in report.profiles:
        q = "+".join(str(v) for v in p.step_counts)
        print(
            f"{q:<10} {p.mean_gap:<13.6g} {p.mean_bound:<13.6g} "
            f"{p.var_gap:<13.6g} {p.var_bound:<13.6g} {p.tail_fraction:.3f}"
        )
    print(f"log-log variance slope across totals: {report.variance_slope:.3f}")
    print(f"pooled tail fraction at confidence {report.confidence}: "
          f"{report.pooled_tail_fraction():.4f}")


def _cmd_master(args) -> int:
    pairs = _load_pairs(args.config)
    spec = resolve(pairs)
    if len(spec.plans) != 1:
        raise ConfigError("a network run drives exactly one scheme")
    label, plan = spec.plans[0]
    if plan.scheme != "anytime" or plan.generalized:
        raise ConfigError("the network runtime implements the plain fixed-window scheme")
    if args.write_cache:
        save_cache(spec.dataset, args.write_cache)
        print(f"dataset cache written to {args.write_cache}")
    listener = netrun.open_listener(args.host, args.port)
    host, port = listener.getsockname()
    print(f"listening on {host}:{port}, waiting for {plan.n_workers} workers")
    trace = netrun.run_master_service(
        listener,
        spec.dataset,
        n_workers=plan.n_workers,
        epochs=plan.epochs,
        time_budget=plan.time_budget,
        waiting_budget=plan.waiting_budget,
        schedule=spec.schedule,
        seed=plan.seed,
        redundancy=plan.redundancy,
        rule=plan.rule,
        sampling=plan.sampling,
        output=plan.output,
        send_raw=args.send_raw,
    )
    listener.close()
    for res, err, t in zip(trace.epochs, trace.errors, trace.times):
        print(f"epoch {res.epoch}: t={t:.2f}s error={err:.6g} "
              f"received={len(res.received)} steps={res.total_steps}")
    if args.out:
        from .experiments import emit_metrics

        os.makedirs(args.out, exist_ok=True)
        emit_metrics(trace, label, os.path.join(args.out, f"{label}-net.csv"))
        print(f"metrics written to {args.out}")
    return 0


def _cmd_worker(args) -> int:
    return netrun.run_worker_process(args.host, args.port, dataset_path=args.dataset)


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="atg",
        description="Fixed-time distributed SGD: simulator, baselines, bound checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every scheme in a config file")
    p.add_argument("config")
    p.add_argument("--out", help="override the output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("preset", help="write and run a built-in experiment")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preset)

    p = sub.add_parser("validate-bounds", help="Monte Carlo check of the bounds")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("master", help="serve a run to networked workers")
    p.add_argument("config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7600)
    p.add_argument("--out")
    p.add_argument("--write-cache", help="save the dataset for workers before listening")
    p.add_argument("--send-raw", action="store_true",
                   help="ship shard rows inside the assignment instead of block ids")
    p.set_defaults(func=_cmd_master)

    p = sub.add_parser("worker", help="join a master and train")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7600)
    p.add_argument("--dataset", help="dataset cache file for block assignments")
    p.set_defaults(func=_cmd_worker)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TimeoutError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

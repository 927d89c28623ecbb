"""Socket master and worker speaking the frame protocol.

The master assigns block indices (or ships raw rows), broadcasts the iterate
each epoch, waits out its deadline, and fuses whatever arrived.  Workers are
separate processes; a worker that dies mid-run is dropped and the run
continues with the rest.
"""

import logging
import math
import queue
import socket
import threading
import time

import numpy as np

from . import rng as streams
from . import wire
from .combine import CombineRule, EpochResult, combine_weights, fuse
from .data import Dataset, block_sample_indices, build_assignment, load_cache, Shard
from .problem import ProblemConstants, StepSchedule, normalized_error
from .simulate import RunTrace
from .worker import LAST_ITERATE, RUNNING_AVERAGE, WorkerBudget, WorkerReport, run_worker_epoch

__all__ = ["run_master_service", "run_worker_process", "open_listener"]

log = logging.getLogger(__name__)


def open_listener(host: str, port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen()
    return sock


def _schedule_fields(schedule: StepSchedule) -> tuple[int, float, float, float, float, float]:
    if schedule.kind == "constant":
        return 0, schedule.rate, 0.0, 0.0, 0.0, 0.0
    c = schedule.constants
    return 1, 0.0, c.smoothness, c.noise_bound, c.radius, c.grad_bound


def _schedule_from_assign(msg: wire.Assign) -> StepSchedule:
    if msg.schedule_kind == 0:
        return StepSchedule.constant(msg.rate)
    constants = ProblemConstants(
        smoothness=msg.smoothness,
        radius=msg.radius,
        grad_bound=msg.grad_bound,
        noise_bound=msg.noise_bound,
    )
    return StepSchedule.decreasing(constants)


def run_master_service(
    listener: socket.socket,
    dataset: Dataset,
    n_workers: int,
    epochs: int,
    time_budget: float,
    waiting_budget: float,
    schedule: StepSchedule,
    seed: int,
    redundancy: int = 0,
    rule: CombineRule | None = None,
    sampling: str = "shard",
    output: str = LAST_ITERATE,
    forced_steps: tuple[int, ...] | None = None,
    x0: np.ndarray | None = None,
    send_raw: bool = False,
    connect_timeout: float = 30.0,
) -> RunTrace:
    """Drive a full run over already-listening TCP, returning its trace."""
    if rule is None:
        rule = CombineRule.work_proportional()
    if forced_steps is not None and len(forced_steps) != n_workers:
        raise ValueError("need one forced step count per worker")
    table = build_assignment(n_workers, redundancy)
    x_star = dataset.solution()
    x = np.zeros(dataset.dim) if x0 is None else np.array(x0, dtype=np.float64)

    conns: dict[int, socket.socket] = {}
    inbox: queue.Queue = queue.Queue()
    listener.settimeout(connect_timeout)
    try:
        for v in range(n_workers):
            conn, addr = listener.accept()
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            log.info("worker %d connected from %s", v, addr)
            raw_rows: tuple = ()
            if send_raw:
                idx = block_sample_indices(dataset.n_samples, table, v)
                raw_rows = tuple(
                    tuple(dataset.features[i]) + (float(dataset.labels[i]),) for i in idx
                )
            sk, rate, smooth, noise, radius, grad = _schedule_fields(schedule)
            conn.sendall(
                wire.encode(
                    wire.Assign(
                        epoch=0,
                        worker=v,
                        n_workers=n_workers,
                        redundancy=redundancy,
                        seed=seed,
                        schedule_kind=sk,
                        rate=rate,
                        smoothness=smooth,
                        noise_bound=noise,
                        radius=radius,
                        grad_bound=grad,
                        sampling=1 if sampling == "global" else 0,
                        output=1 if output == RUNNING_AVERAGE else 0,
                        blocks=tuple(table.blocks_of(v)),
                        raw_rows=raw_rows,
                    )
                )
            )
            conn.settimeout(connect_timeout)
            ack = wire.decode(wire.read_frame(conn))
            if not isinstance(ack, wire.Ack):
                raise wire.ProtocolError(8, "expected an ack after assignment")
            conn.settimeout(None)
            conns[v] = conn
            threading.Thread(target=_reader, args=(v, conn, inbox), daemon=True).start()
    except socket.timeout:
        for c in conns.values():
            c.close()
        raise TimeoutError(f"only {len(conns)} of {n_workers} workers connected")

    live = set(conns)
    results: list[EpochResult] = []
    errors: list[float] = []
    times: list[float] = []
    counts = np.zeros((epochs, n_workers), dtype=np.int64)
    start_wall = time.monotonic()

    for t in range(1, epochs + 1):
        payload_x = tuple(float(v) for v in x)
        for v in sorted(live):
            forced = forced_steps[v] if forced_steps is not None else 0
            try:
                conns[v].sendall(
                    wire.encode(wire.StartEpoch(t, time_budget, forced, payload_x))
                )
            except OSError:
                log.warning("worker %d unreachable at epoch %d; dropping it", v, t)
                live.discard(v)

        deadline = time.monotonic() + time_budget + waiting_budget
        reports: dict[int, WorkerReport] = {}
        pending = set(live)
        while pending and (remain := deadline - time.monotonic()) > 0:
            try:
                v, msg = inbox.get(timeout=remain)
            except queue.Empty:
                break
            if msg is None:
                log.warning("worker %d disconnected; dropping it", v)
                live.discard(v)
                pending.discard(v)
                continue
            if not isinstance(msg, wire.Update) or msg.epoch != t:
                continue
            pending.discard(v)
            if msg.diverged:
                log.warning("worker %d diverged in epoch %d", v, t)
                continue
            reports[v] = WorkerReport(
                worker=v,
                epoch=t,
                iterate=np.array(msg.iterate),
                n_steps=msg.n_steps,
                finish_time=msg.elapsed,
                output=output,
            )
            counts[t - 1, v] = msg.n_steps

        received = sorted(reports)
        if received:
            recv_list = [reports[v] for v in received]
            weights = combine_weights(recv_list, rule)
            x = fuse(recv_list, weights)
            weights_full = np.zeros(n_workers)
            for v, w in zip(received, weights):
                weights_full[v] = w
            total_q = int(sum(r.n_steps for r in recv_list))
        else:
            log.warning("epoch %d received nothing before the deadline", t)
            weights_full = np.zeros(n_workers)
            total_q = 0
        results.append(EpochResult(t, x.copy(), received, weights_full, total_q))
        errors.append(normalized_error(dataset.features, x, x_star))
        times.append(time.monotonic() - start_wall)
        if not live:
            log.warning("no live workers remain; stopping after epoch %d", t)
            break

    for v in sorted(live):
        try:
            conns[v].sendall(wire.encode(wire.Stop()))
        except OSError:
            pass
    for c in conns.values():
        c.close()
    return RunTrace("net", results, errors, times, counts)


def _reader(v: int, conn: socket.socket, inbox: queue.Queue):
    try:
        while True:
            frame = wire.read_frame(conn)
            if not frame:
                break
            inbox.put((v, wire.decode(frame)))
    except (OSError, wire.ProtocolError) as exc:
        log.debug("reader for worker %d stopped: %s", v, exc)
    inbox.put((v, None))


def run_worker_process(
    host: str,
    port: int,
    dataset_path: str | None = None,
    connect_timeout: float = 30.0,
) -> int:
    """Join a master, train when told to, leave on stop.  Returns exit code."""
    sock = _connect_with_retry(host, port, connect_timeout)
    try:
        sock.settimeout(connect_timeout)
        assign = wire.decode(wire.read_frame(sock))
        if not isinstance(assign, wire.Assign):
            log.error("expected an assignment, got %s", type(assign).__name__)
            return 2
        shard = _build_shard(assign, dataset_path)
        schedule = _schedule_from_assign(assign)
        output = RUNNING_AVERAGE if assign.output else LAST_ITERATE
        sock.sendall(wire.encode(wire.Ack()))
        sock.settimeout(None)

        while True:
            frame = wire.read_frame(sock)
            if not frame:
                log.warning("master went away; exiting")
                return 1
            msg = wire.decode(frame)
            if isinstance(msg, wire.Stop):
                return 0
            if not isinstance(msg, wire.StartEpoch):
                log.error("unexpected %s mid-run", type(msg).__name__)
                return 2
            rep = _net_epoch(shard, schedule, assign, msg, output)
            sock.sendall(
                wire.encode(
                    wire.Update(
                        epoch=msg.epoch,
                        worker=assign.worker,
                        diverged=rep.status != "ok",
                        n_steps=rep.n_steps,
                        elapsed=rep.finish_time,
                        iterate=tuple(float(u) for u in rep.iterate),
                    )
                )
            )
    except (OSError, wire.ProtocolError) as exc:
        log.error("worker failed: %s", exc)
        return 1
    finally:
        sock.close()


def _connect_with_retry(host: str, port: int, timeout: float) -> socket.socket:
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except OSError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.05)


def _build_shard(assign: wire.Assign, dataset_path: str | None) -> Shard:
    if assign.raw_rows:
        rows = np.array(assign.raw_rows)
        return Shard(rows[:, :-1], rows[:, -1])
    if dataset_path is None:
        raise ValueError("no raw data in the assignment and no dataset path given")
    dataset = load_cache(dataset_path)
    if assign.sampling == 1:
        return Shard(dataset.features, dataset.labels)
    table = build_assignment(assign.n_workers, assign.redundancy)
    idx = block_sample_indices(dataset.n_samples, table, assign.worker)
    return Shard(dataset.features[idx], dataset.labels[idx])


def _net_epoch(
    shard: Shard,
    schedule: StepSchedule,
    assign: wire.Assign,
    msg: wire.StartEpoch,
    output: str,
) -> WorkerReport:
    x0 = np.array(msg.x)
    sample_rng = streams.stream(assign.seed, streams.SAMPLE, assign.worker, msg.epoch)
    if msg.forced_steps > 0:
        rep = run_worker_epoch(
            shard,
            x0,
            schedule,
            WorkerBudget.by_iterations(msg.forced_steps),
            1.0,
            sample_rng,
            output=output,
            worker=assign.worker,
            epoch=msg.epoch,
        )
        return rep
    return _timed_epoch(shard, x0, schedule, msg.time_budget, sample_rng, output, assign.worker, msg.epoch)


def _timed_epoch(
    shard: Shard,
    x0: np.ndarray,
    schedule: StepSchedule,
    seconds: float,
    sample_rng: np.random.Generator,
    output: str,
    worker: int,
    epoch: int,
) -> WorkerReport:
    """Step until the wall clock runs out, checking the clock between slices."""
    feats, labels = shard.features, shard.labels
    x = np.array(x0, dtype=np.float64)
    averaging = output == RUNNING_AVERAGE
    acc = x.copy() if averaging else None
    slice_len = 32
    done = 0
    status = "ok"
    start = time.monotonic()
    while time.monotonic() - start < seconds and status == "ok":
        idx = sample_rng.integers(0, len(feats), size=slice_len)
        rates = schedule.rates(done, slice_len)
        for k in range(slice_len):
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
        finish_time=time.monotonic() - start,
        output=output,
        status=status,
    )

"""Length-prefixed binary frames for the master/worker runtime.

Frame layout: 4-byte magic, little-endian u32 length, u8 message kind,
little-endian u32 epoch, then a kind-specific payload.  The length counts
everything after the length field, so an empty-payload frame is 13 bytes.
All floats are little-endian f64.
"""

import struct
from dataclasses import dataclass, field

__all__ = [
    "MAGIC",
    "ASSIGN",
    "START_EPOCH",
    "UPDATE",
    "STOP",
    "ACK",
    "ProtocolError",
    "Assign",
    "StartEpoch",
    "Update",
    "Stop",
    "Ack",
    "encode",
    "decode",
    "read_frame",
]

MAGIC = b"ATGW"
MAX_FRAME = 64 * 1024 * 1024

ASSIGN = 1
START_EPOCH = 2
UPDATE = 3
STOP = 4
ACK = 5

_KINDS = (ASSIGN, START_EPOCH, UPDATE, STOP, ACK)


class ProtocolError(Exception):
    """Malformed frame; offset points at the offending byte."""

    def __init__(self, offset: int, reason: str):
        super().__init__(f"byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason


@dataclass(frozen=True)
class Assign:
    """Hands a worker its identity, schedule, and data blocks."""

    epoch: int
    worker: int
    n_workers: int
    redundancy: int
    seed: int
    schedule_kind: int  # 0 constant rate, 1 decreasing
    rate: float
    smoothness: float
    noise_bound: float
    radius: float
    grad_bound: float
    sampling: int  # 0 shard, 1 global
    output: int  # 0 last iterate, 1 running average
    blocks: tuple[int, ...]
    raw_rows: tuple[tuple[float, ...], ...] = field(default=())


@dataclass(frozen=True)
class StartEpoch:
    epoch: int
    time_budget: float
    forced_steps: int
    x: tuple[float, ...]


@dataclass(frozen=True)
class Update:
    epoch: int
    worker: int
    diverged: bool
    n_steps: int
    elapsed: float
    iterate: tuple[float, ...]


@dataclass(frozen=True)
class Stop:
    epoch: int = 0


@dataclass(frozen=True)
class Ack:
    epoch: int = 0


class _Reader:
    def __init__(self, buf: bytes, base: int):
        self.buf = buf
        self.pos = 0
        self.base = base

    def _take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise ProtocolError(self.base + self.pos, f"truncated {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self._take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self._take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self._take(8, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self._take(8, what))[0]

    def f64s(self, n: int, what: str) -> tuple[float, ...]:
        return struct.unpack(f"<{n}d", self._take(8 * n, what))

    def u32s(self, n: int, what: str) -> tuple[int, ...]:
        return struct.unpack(f"<{n}I", self._take(4 * n, what))

    def done(self):
        if self.pos != len(self.buf):
            raise ProtocolError(self.base + self.pos, "trailing bytes in payload")


def _vec(x) -> tuple[float, ...]:
    return tuple(float(v) for v in x)


def encode(msg) -> bytes:
    """Serialize one message to a complete frame."""
    if isinstance(msg, Assign):
        kind = ASSIGN
        payload = struct.pack(
            "<IIIQ", msg.worker, msg.n_workers, msg.redundancy, msg.seed
        )
        payload += struct.pack(
            "<Bddddd",
            msg.schedule_kind,
            msg.rate,
            msg.smoothness,
            msg.noise_bound,
            msg.radius,
            msg.grad_bound,
        )
        payload += struct.pack("<BB", msg.sampling, msg.output)
        payload += struct.pack("<B", 1 if msg.raw_rows else 0)
        payload += struct.pack("<I", len(msg.blocks))
        payload += struct.pack(f"<{len(msg.blocks)}I", *msg.blocks)
        if msg.raw_rows:
            rows = len(msg.raw_rows)
            width = len(msg.raw_rows[0])
            payload += struct.pack("<QQ", rows, width - 1)
            flat = [v for row in msg.raw_rows for v in row]
            payload += struct.pack(f"<{len(flat)}d", *flat)
    elif isinstance(msg, StartEpoch):
        kind = START_EPOCH
        payload = struct.pack("<dQQ", msg.time_budget, msg.forced_steps, len(msg.x))
        payload += struct.pack(f"<{len(msg.x)}d", *msg.x)
    elif isinstance(msg, Update):
        kind = UPDATE
        payload = struct.pack(
            "<IBQdQ", msg.worker, 1 if msg.diverged else 0, msg.n_steps, msg.elapsed, len(msg.iterate)
        )
        payload += struct.pack(f"<{len(msg.iterate)}d", *msg.iterate)
    elif isinstance(msg, Stop):
        kind, payload = STOP, b""
    elif isinstance(msg, Ack):
        kind, payload = ACK, b""
    else:
        raise TypeError(f"not a wire message: {type(msg).__name__}")

    length = 5 + len(payload)
    if length > MAX_FRAME:
        raise ValueError("message too large for one frame")
    return MAGIC + struct.pack("<IBI", length, kind, msg.epoch) + payload


def decode(frame: bytes):
    """Parse one complete frame back into its message."""
    if len(frame) < 8:
        raise ProtocolError(0, "truncated header")
    if frame[:4] != MAGIC:
        raise ProtocolError(0, f"bad magic {frame[:4]!r}")
    (length,) = struct.unpack("<I", frame[4:8])
    if length < 5:
        raise ProtocolError(4, "length below minimum")
    if length > MAX_FRAME:
        raise ProtocolError(4, "length overflow")
    if len(frame) != 8 + length:
        raise ProtocolError(4, f"frame is {len(frame)} bytes, header promises {8 + length}")
    kind = frame[8]
    if kind not in _KINDS:
        raise ProtocolError(8, f"unknown message kind {kind}")
    (epoch,) = struct.unpack("<I", frame[9:13])
    r = _Reader(frame[13:], 13)

    if kind == ASSIGN:
        worker = r.u32("worker id")
        n_workers = r.u32("worker count")
        redundancy = r.u32("redundancy")
        seed = r.u64("seed")
        sched_kind = r.u8("schedule kind")
        if sched_kind not in (0, 1):
            raise ProtocolError(13 + r.pos - 1, f"unknown schedule kind {sched_kind}")
        rate = r.f64("rate")
        smoothness = r.f64("smoothness")
        noise = r.f64("noise bound")
        radius = r.f64("radius")
        grad = r.f64("gradient bound")
        sampling = r.u8("sampling mode")
        output = r.u8("output mode")
        if sampling not in (0, 1) or output not in (0, 1):
            raise ProtocolError(13 + r.pos - 1, "bad mode byte")
        raw_flag = r.u8("raw-data flag")
        n_blocks = r.u32("block count")
        if n_blocks * 4 > len(r.buf) - r.pos:
            raise ProtocolError(13 + r.pos - 4, "block list longer than payload")
        blocks = r.u32s(n_blocks, "block indices")
        raw_rows: tuple = ()
        if raw_flag:
            rows = r.u64("raw row count")
            dim = r.u64("raw dimension")
            if rows * (dim + 1) * 8 > len(r.buf) - r.pos:
                raise ProtocolError(13 + r.pos - 16, "raw block longer than payload")
            flat = r.f64s(rows * (dim + 1), "raw samples")
            raw_rows = tuple(
                flat[i * (dim + 1) : (i + 1) * (dim + 1)] for i in range(rows)
            )
        r.done()
        return Assign(
            epoch, worker, n_workers, redundancy, seed, sched_kind, rate,
            smoothness, noise, radius, grad, sampling, output, blocks, raw_rows,
        )

    if kind == START_EPOCH:
        time_budget = r.f64("time budget")
        forced = r.u64("forced step count")
        dim = r.u64("dimension")
        if dim * 8 > len(r.buf) - r.pos:
            raise ProtocolError(13 + r.pos - 8, "vector longer than payload")
        x = r.f64s(dim, "parameter vector")
        r.done()
        return StartEpoch(epoch, time_budget, forced, x)

    if kind == UPDATE:
        worker = r.u32("worker id")
        status = r.u8("status")
        if status not in (0, 1):
            raise ProtocolError(13 + r.pos - 1, f"bad status byte {status}")
        n_steps = r.u64("step count")
        elapsed = r.f64("elapsed time")
        dim = r.u64("dimension")
        if dim * 8 > len(r.buf) - r.pos:
            raise ProtocolError(13 + r.pos - 8, "vector longer than payload")
        iterate = r.f64s(dim, "iterate")
        r.done()
        return Update(epoch, worker, bool(status), n_steps, elapsed, iterate)

    r.done()
    return Stop(epoch) if kind == STOP else Ack(epoch)


def read_frame(sock) -> bytes:
    """Read exactly one frame from a socket; empty bytes on clean close."""
    head = _recvall(sock, 8)
    if not head:
        return b""
    if head[:4] != MAGIC:
        raise ProtocolError(0, f"bad magic {head[:4]!r}")
    (length,) = struct.unpack("<I", head[4:8])
    if not 5 <= length <= MAX_FRAME:
        raise ProtocolError(4, "length out of range")
    body = _recvall(sock, length)
    if len(body) != length:
        raise ProtocolError(8, "connection closed mid-frame")
    return head + body


def _recvall(sock, n: int) -> bytes:
    parts = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            break
        parts.append(chunk)
        got += len(chunk)
    return b"".join(parts)

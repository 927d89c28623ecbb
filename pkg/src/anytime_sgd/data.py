"""Datasets, replicated block placement, and worker shards."""

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as streams
from .problem import DataSample

__all__ = [
    "Dataset",
    "Shard",
    "AssignmentTable",
    "generate_synthetic",
    "load_csv",
    "build_assignment",
    "worker_shard",
    "save_cache",
    "load_cache",
]

CACHE_MAGIC = b"ATG1"


@dataclass
class Dataset:
    """Feature matrix, labels, and (when known) the generating parameters."""

    features: np.ndarray
    labels: np.ndarray
    x_star: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if self.labels.shape != (len(self.features),):
            raise ValueError("labels must be 1-d with one entry per feature row")
        if len(self.features) == 0:
            raise ValueError("dataset is empty")

    @property
    def n_samples(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def sample(self, k: int) -> DataSample:
        return DataSample(self.features[k], float(self.labels[k]))

    def solution(self) -> np.ndarray:
        """x_star if known, otherwise the least-squares solution."""
        if self.x_star is not None:
            return self.x_star
        x, _, rank, _ = np.linalg.lstsq(self.features, self.labels, rcond=None)
        if rank < self.dim:
            raise ValueError("feature matrix is rank deficient; no unique solution")
        return x


class Shard:
    """The samples one worker trains on, stored as contiguous arrays.

    Behaves as a sequence of DataSample for interface purposes; the arrays
    are exposed directly for the hot path.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray):
        if len(features) == 0:
            raise ValueError("shard is empty")
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.labels = np.ascontiguousarray(labels, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, k: int) -> DataSample:
        return DataSample(self.features[k], float(self.labels[k]))


@dataclass(frozen=True)
class AssignmentTable:
    """Which of the n_blocks data blocks each worker stores.

    Block i is replicated on the redundancy + 1 workers whose circular window
    covers it.  placement[v, i] is True when worker v stores block i.
    """

    n_workers: int
    redundancy: int
    placement: np.ndarray = field(compare=False)

    def blocks_of(self, v: int) -> list[int]:
        """Block indices held by worker v, in window order starting at v."""
        n, s = self.n_workers, self.redundancy
        return [(v + j) % n for j in range(s + 1)]


def build_assignment(n_workers: int, redundancy: int) -> AssignmentTable:
    """Circular replicated placement of n_workers blocks over n_workers workers.

    Worker v stores blocks v, v+1, ..., v+redundancy (mod n_workers), so each
    block lives on exactly redundancy + 1 workers.
    """
    if n_workers < 1:
        raise ValueError("need at least one worker")
    if not 0 <= redundancy < n_workers:
        raise ValueError("redundancy must be in [0, n_workers)")
    placement = np.zeros((n_workers, n_workers), dtype=bool)
    for v in range(n_workers):
        for j in range(redundancy + 1):
            placement[v, (v + j) % n_workers] = True
    return AssignmentTable(n_workers, redundancy, placement)


def block_bounds(n_samples: int, n_blocks: int) -> list[tuple[int, int]]:
    """Half-open sample ranges of the n_blocks equal blocks; the last block
    absorbs any remainder."""
    if n_blocks < 1 or n_blocks > n_samples:
        raise ValueError("need 1 <= n_blocks <= n_samples")
    size = n_samples // n_blocks
    bounds = []
    for i in range(n_blocks):
        lo = i * size
        hi = (i + 1) * size if i < n_blocks - 1 else n_samples
        bounds.append((lo, hi))
    return bounds


def block_sample_indices(n_samples: int, table: AssignmentTable, v: int) -> np.ndarray:
    """Sample indices of worker v's shard, blocks concatenated in window order."""
    bounds = block_bounds(n_samples, table.n_workers)
    parts = [np.arange(*bounds[i]) for i in table.blocks_of(v)]
    return np.concatenate(parts)


def worker_shard(dataset: Dataset, table: AssignmentTable, v: int) -> Shard:
    """Materialize the shard worker v trains on."""
    if not 0 <= v < table.n_workers:
        raise ValueError("worker index out of range")
    idx = block_sample_indices(dataset.n_samples, table, v)
    return Shard(dataset.features[idx], dataset.labels[idx])


def generate_synthetic(n_samples: int, dim: int, noise_std: float, seed: int) -> Dataset:
    """Gaussian design with labels from a Gaussian ground-truth vector.

    Features and the generating vector are standard normal; labels get
    additive N(0, noise_std^2) noise.
    """
    if n_samples < 1 or dim < 1:
        raise ValueError("n_samples and dim must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    gen = streams.stream(seed, streams.DATA)
    features = gen.standard_normal((n_samples, dim))
    x_star = gen.standard_normal(dim)
    labels = features @ x_star + noise_std * gen.standard_normal(n_samples)
    return Dataset(features, labels, x_star)


def load_csv(
    path: str,
    label_column: int = -1,
    has_header: bool = False,
    standardize: bool = True,
) -> Dataset:
    """Load a numeric CSV as a dataset.

    One column is the label; the rest are features.  Cell-level parse errors
    report the offending row and column.  Standardization centers each
    feature column and scales it to unit variance (constant columns are left
    centered).
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not row:
                continue
            rows.append((lineno, row))
    if not rows:
        raise ValueError(f"{path}: no data rows")

    width = len(rows[0][1])
    if width < 2:
        raise ValueError(f"{path}: need at least two columns (features and a label)")
    label_idx = label_column % width
    values = np.empty((len(rows), width))
    for i, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {lineno} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: row {lineno}, column {j + 1}: not a number: {cell!r}"
                ) from None

    labels = values[:, label_idx]
    features = np.delete(values, label_idx, axis=1)
    if standardize:
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        std[std == 0.0] = 1.0
        features = (features - mean) / std
    return Dataset(features, labels)


def save_cache(dataset: Dataset, path: str) -> None:
    """Write the dataset in the binary cache layout.

    Layout: magic, u64 sample count, u64 dimension, then per sample the
    feature values followed by the label, all little-endian f64.
    """
    m, d = dataset.n_samples, dataset.dim
    rows = np.hstack([dataset.features, dataset.labels[:, None]])
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<QQ", m, d))
        fh.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())


def load_cache(path: str) -> Dataset:
    """Read a dataset written by save_cache."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError(f"{path}: truncated header")
        m, d = struct.unpack("<QQ", header)
        body = fh.read()
    expect = m * (d + 1) * 8
    if len(body) != expect:
        raise ValueError(f"{path}: body is {len(body)} bytes, expected {expect}")
    rows = np.frombuffer(body, dtype="<f8").reshape(m, d + 1)
    return Dataset(rows[:, :d].copy(), rows[:, d].copy())

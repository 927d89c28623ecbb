"""Placement, shards, synthetic data, and on-disk formats."""

import numpy as np
import pytest

from anytime_sgd.data import (
    Dataset,
    block_bounds,
    block_sample_indices,
    build_assignment,
    generate_synthetic,
    load_cache,
    load_csv,
    save_cache,
    worker_shard,
)


def test_assignment_blocks_wrap_around():
    table = build_assignment(5, 2)
    assert table.blocks_of(0) == [0, 1, 2]
    assert table.blocks_of(3) == [3, 4, 0]
    assert table.blocks_of(4) == [4, 0, 1]


def test_every_block_replicated_exactly_redundancy_plus_one():
    for n in range(1, 13):
        for s in range(n):
            table = build_assignment(n, s)
            held = np.zeros(n, dtype=int)
            for v in range(n):
                blocks = table.blocks_of(v)
                assert len(blocks) == len(set(blocks)) == s + 1
                for b in blocks:
                    held[b] += 1
            assert np.all(held == s + 1), (n, s)


def test_assignment_rejects_bad_shapes():
    with pytest.raises(ValueError):
        build_assignment(0, 0)
    with pytest.raises(ValueError):
        build_assignment(4, 4)
    with pytest.raises(ValueError):
        build_assignment(4, -1)


def test_block_bounds_partition_all_samples():
    for m in (10, 11, 17, 100):
        for n in (1, 2, 3, 7):
            bounds = block_bounds(m, n)
            assert len(bounds) == n
            assert bounds[0][0] == 0
            assert bounds[-1][1] == m
            for (a0, a1), (b0, b1) in zip(bounds, bounds[1:]):
                assert a1 == b0
            # equal floor-sized blocks; the last absorbs the remainder
            sizes = [b - a for a, b in bounds]
            assert sizes[:-1] == [m // n] * (n - 1)


def test_worker_shard_matches_block_indices():
    ds = generate_synthetic(23, 3, 0.1, seed=5)
    table = build_assignment(4, 1)
    for v in range(4):
        idx = block_sample_indices(ds.n_samples, table, v)
        shard = worker_shard(ds, table, v)
        assert np.array_equal(shard.features, ds.features[idx])
        assert np.array_equal(shard.labels, ds.labels[idx])
        assert len(shard) == len(idx)
        s = shard[1]
        assert np.array_equal(s.features, ds.features[idx[1]])


def test_shards_cover_every_sample():
    ds = generate_synthetic(31, 2, 0.0, seed=1)
    for s in (0, 1, 2):
        table = build_assignment(5, s)
        seen = np.zeros(31, dtype=int)
        for v in range(5):
            seen[block_sample_indices(ds.n_samples, table, v)] += 1
        assert np.all(seen == s + 1)


def test_generate_synthetic_is_deterministic():
    a = generate_synthetic(50, 4, 0.1, seed=9)
    b = generate_synthetic(50, 4, 0.1, seed=9)
    c = generate_synthetic(50, 4, 0.1, seed=10)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.labels, c.labels)


def test_generate_synthetic_labels_follow_planted_solution():
    ds = generate_synthetic(200, 6, 0.0, seed=3)
    assert np.allclose(ds.labels, ds.features @ ds.solution(), atol=1e-12)
    noisy = generate_synthetic(200, 6, 0.5, seed=3)
    resid = noisy.labels - noisy.features @ noisy.x_star
    assert 0.2 < resid.std() < 0.8


def test_solution_recovers_planted_vector_via_least_squares():
    ds = generate_synthetic(80, 5, 0.0, seed=2)
    bare = Dataset(features=ds.features, labels=ds.labels)
    assert np.allclose(bare.solution(), ds.x_star, atol=1e-8)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(features=np.ones((3, 2)), labels=np.ones(4))
    with pytest.raises(ValueError):
        Dataset(features=np.ones(3), labels=np.ones(3))


def test_cache_roundtrip_is_exact(tmp_path):
    ds = generate_synthetic(37, 4, 0.2, seed=8)
    path = str(tmp_path / "data.bin")
    save_cache(ds, path)
    back = load_cache(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)


def test_cache_rejects_corruption(tmp_path):
    ds = generate_synthetic(10, 2, 0.0, seed=0)
    path = str(tmp_path / "data.bin")
    save_cache(ds, path)
    raw = bytearray(open(path, "rb").read())
    bad_magic = tmp_path / "bad_magic.bin"
    bad_magic.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(ValueError):
        load_cache(str(bad_magic))
    truncated = tmp_path / "short.bin"
    truncated.write_bytes(bytes(raw[:-9]))
    with pytest.raises(ValueError):
        load_cache(str(truncated))


def test_load_csv_parses_and_standardizes(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,y\n1,10,3\n2,20,4\n3,30,5\n4,40,6\n")
    ds = load_csv(str(path), label_column=-1, has_header=True, standardize=True)
    assert ds.n_samples == 4 and ds.dim == 2
    assert np.allclose(ds.features.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(ds.features.std(axis=0), 1.0, atol=1e-12)
    assert np.array_equal(ds.labels, [3.0, 4.0, 5.0, 6.0])

    plain = load_csv(str(path), label_column=0, has_header=True, standardize=False)
    assert np.array_equal(plain.labels, [1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(plain.features[:, 0], [10.0, 20.0, 30.0, 40.0])


def test_load_csv_reports_row_and_value_errors(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2,3\n4,5\n")
    with pytest.raises(ValueError, match="row 2"):
        load_csv(str(ragged), has_header=False)

    garbled = tmp_path / "garbled.csv"
    garbled.write_text("1,2,3\n4,oops,6\n")
    with pytest.raises(ValueError, match="row 2"):
        load_csv(str(garbled), has_header=False)

"""Tests for wave sizing, memory admission, gathering and offset writes."""

import os
import shutil
import threading
from types import SimpleNamespace

import numpy as np
import pytest

from elsort.cdf_model import PartitionPlan
from elsort.datagen import make_records
from elsort.exceptions import (
    DataFormatError,
    InsufficientSpaceError,
    InvariantViolationError,
    OversizedPartitionError,
)
from elsort.instrumentation import IoCounter
from elsort.internal_sort import SortBuffer
from elsort.partitioner import FragmentMatrix
from elsort.writer import (
    CoalesceBuffer,
    MemoryBudget,
    PartitionCounter,
    compute_wave,
    create_sparse_output,
    gather_partition,
    write_partition,
)

from .conftest import sorted_records


class TestComputeWave:
    def test_budget_limits_wave(self):
        wave = compute_wave(np.array([300, 300, 300, 300]), 100_000, workers=8)
        assert wave.s == 3
        assert wave.assignment == 2

    def test_everything_fits(self):
        assert compute_wave(np.array([10] * 6), 10**9, workers=4).s == 4
        assert compute_wave(np.array([10] * 3), 10**9, workers=16).s == 3

    def test_partition_exactly_at_budget(self):
        assert compute_wave(np.array([10]), 1000, workers=4).s == 1

    def test_oversized_partition(self):
        with pytest.raises(OversizedPartitionError, match="--partitions"):
            compute_wave(np.array([5, 11, 2]), 1000, workers=4)

    def test_empty_partitions_only(self):
        assert compute_wave(np.zeros(4, dtype=np.int64), 1000, workers=2).s == 2


class TestMemoryBudget:
    def test_peak_tracking(self):
        budget = MemoryBudget(1000)
        budget.acquire(400)
        budget.acquire(600)
        assert not budget.can_acquire(1)
        budget.release(400)
        budget.release(600)
        stats = budget.get_statistics()
        assert stats["peak"] == 1000
        assert stats["in_use"] == 0
        assert stats["admitted"] == 2

    def test_rejects_oversized_request(self):
        with pytest.raises(OversizedPartitionError):
            MemoryBudget(100).acquire(101)

    def test_concurrent_admission_stays_within_limit(self):
        budget = MemoryBudget(1000)
        rng = np.random.default_rng(0)
        requests = rng.integers(100, 1001, size=(8, 50)).tolist()

        def work(sizes):
            for size in sizes:
                budget.acquire(size)
                budget.release(size)

        threads = [threading.Thread(target=work, args=(sizes,)) for sizes in requests]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert budget.peak <= 1000
        assert budget.in_use == 0
        assert budget.admitted == 400


def test_partition_counter_hands_out_each_index_once():
    counter = PartitionCounter(500)
    seen: list[int] = []
    lock = threading.Lock()

    def drain():
        while (j := counter.next()) is not None:
            with lock:
                seen.append(j)

    threads = [threading.Thread(target=drain) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(seen) == list(range(500))


class TestGather:
    def test_concatenates_rows_in_order(self, tmp_path):
        fragments = FragmentMatrix(tmp_path, r=3, f=1)
        first, last = make_records(0, 3, seed=1), make_records(3, 2, seed=1)
        fragments.fragment_path(0, 0).write_bytes(first.tobytes())
        fragments.fragment_path(2, 0).write_bytes(last.tobytes())
        counter = IoCounter()

        buffer = gather_partition(0, fragments, counter)

        assert len(buffer) == 5
        np.testing.assert_array_equal(buffer.records, np.concatenate([first, last]))
        assert counter.bytes_read == 500
        assert list(tmp_path.iterdir()) == []

    def test_all_fragments_missing(self, tmp_path):
        buffer = gather_partition(0, FragmentMatrix(tmp_path, r=2, f=1))
        assert len(buffer) == 0

    def test_malformed_fragment(self, tmp_path):
        fragments = FragmentMatrix(tmp_path, r=1, f=1)
        fragments.fragment_path(0, 0).write_bytes(b"x" * 150)
        with pytest.raises(DataFormatError):
            gather_partition(0, fragments)


class TestWritePartition:
    def test_writes_at_offset(self, tmp_path):
        path = tmp_path / "out.bin"
        create_sparse_output(path, 1000)
        plan = PartitionPlan(f=3, r=1, sizes=np.array([3, 5, 2]))
        records = sorted_records(make_records(0, 2, seed=3))
        fd = os.open(path, os.O_WRONLY)
        try:
            counter = IoCounter()
            write_partition(2, SortBuffer(records), plan, fd, coalesce_bytes=100, counter=counter)
        finally:
            os.close(fd)
        data = path.read_bytes()
        assert len(data) == 1000
        assert data[800:] == records.tobytes()
        assert data[:800] == bytes(800)
        assert counter.bytes_written == 200

    def test_size_mismatch(self, tmp_path):
        path = tmp_path / "out.bin"
        create_sparse_output(path, 1000)
        plan = PartitionPlan(f=3, r=1, sizes=np.array([3, 5, 2]))
        fd = os.open(path, os.O_WRONLY)
        try:
            with pytest.raises(InvariantViolationError):
                write_partition(2, SortBuffer(make_records(0, 3, seed=1)), plan, fd)
        finally:
            os.close(fd)

    def test_empty_partition_writes_nothing(self, tmp_path):
        path = tmp_path / "out.bin"
        create_sparse_output(path, 300)
        plan = PartitionPlan(f=2, r=1, sizes=np.array([0, 3]))
        fd = os.open(path, os.O_WRONLY)
        try:
            assert write_partition(0, SortBuffer(make_records(0, 0, seed=1)), plan, fd) == 0.0
        finally:
            os.close(fd)


def test_coalesce_buffer_flushes_whole_records(tmp_path):
    path = tmp_path / "out.bin"
    create_sparse_output(path, 500)
    records = make_records(0, 5, seed=2)
    counter = IoCounter()
    fd = os.open(path, os.O_WRONLY)
    try:
        buffer = CoalesceBuffer(fd, 0, size=250, counter=counter)
        assert buffer.size == 200
        buffer.append(records)
        assert buffer.flushes == 2
        buffer.flush()
    finally:
        os.close(fd)
    assert buffer.flushes == 3
    assert counter.bytes_written == 500
    assert path.read_bytes() == records.tobytes()


class TestSparseOutput:
    def test_zero_length(self, tmp_path):
        out = create_sparse_output(tmp_path / "out.bin", 0)
        assert out.record_count == 0
        assert (tmp_path / "out.bin").stat().st_size == 0

    def test_replaces_existing_file(self, tmp_path):
        path = tmp_path / "out.bin"
        path.write_bytes(b"hello" * 1000)
        create_sparse_output(path, 300)
        assert path.read_bytes() == bytes(300)

    def test_insufficient_space(self, tmp_path, monkeypatch):
        monkeypatch.setattr(shutil, "disk_usage", lambda _: SimpleNamespace(free=10))
        with pytest.raises(InsufficientSpaceError):
            create_sparse_output(tmp_path / "out.bin", 1000)

"""Tests for read planning and scatter into fragments."""

import numpy as np
import pytest

from elsort.cdf_model import draw_sample, partition_of, train
from elsort.datagen import make_records
from elsort.encoding import encode_records
from elsort.exceptions import InvariantViolationError, ValidationError
from elsort.partitioner import (
    FragmentMatrix,
    check_partition_order,
    flush_fragments,
    plan_reads,
    run_partition_phase,
    scan_fragment_bounds,
    scatter_batch,
)
from elsort.records import RecordFile, as_records, checksum_records, write_records

from .conftest import constant_model


class TestPlanReads:
    def test_even_split(self, tmp_path):
        plan = plan_reads(RecordFile(tmp_path / "x", 100), 4)
        assert [a.offset for a in plan] == [0, 2500, 5000, 7500]
        assert [a.quota for a in plan] == [25, 25, 25, 25]

    def test_last_worker_takes_remainder(self, tmp_path):
        plan = plan_reads(RecordFile(tmp_path / "x", 10), 3)
        assert [a.quota for a in plan] == [3, 3, 4]
        assert [a.start for a in plan] == [0, 3, 6]

    def test_single_reader(self, tmp_path):
        plan = plan_reads(RecordFile(tmp_path / "x", 10), 1)
        assert len(plan) == 1 and plan[0].quota == 10

    def test_fewer_records_than_readers(self, tmp_path):
        plan = plan_reads(RecordFile(tmp_path / "x", 2), 5)
        assert [a.quota for a in plan] == [1, 1]

    def test_zero_readers(self, tmp_path):
        with pytest.raises(ValidationError):
            plan_reads(RecordFile(tmp_path / "x", 10), 0)


@pytest.fixture
def model(tmp_path):
    f = write_records(tmp_path / "sample.bin", make_records(0, 4000, seed=21))
    return train(draw_sample(f, rate=0.25, mode="whole-file"), leaves=32)


class TestScatter:
    def test_all_to_one_partition(self, tmp_path):
        fragments = FragmentMatrix(tmp_path, r=1, f=4)
        scatter_batch(make_records(0, 50, seed=1), constant_model(0.0), 0, fragments)
        assert fragments.partition_sizes().tolist() == [50, 0, 0, 0]

    def test_empty_batch(self, tmp_path):
        fragments = FragmentMatrix(tmp_path, r=1, f=4)
        scatter_batch(make_records(0, 0, seed=1), constant_model(0.0), 0, fragments)
        flush_fragments(0, fragments, final=True)
        assert fragments.partition_sizes().tolist() == [0, 0, 0, 0]
        assert list(tmp_path.iterdir()) == []

    def test_counts_match_scalar_partitioning(self, tmp_path, model):
        batch = make_records(0, 500, seed=5)
        fragments = FragmentMatrix(tmp_path, r=1, f=8)
        scatter_batch(batch, model, 0, fragments)
        expected = np.zeros(8, dtype=np.int64)
        for key in encode_records(batch):
            expected[partition_of(model, int(key), 8)] += 1
        assert fragments.partition_sizes().tolist() == expected.tolist()

    def test_arrival_order_kept(self, tmp_path):
        first, second = make_records(0, 3, seed=1), make_records(3, 4, seed=1)
        fragments = FragmentMatrix(tmp_path, r=1, f=4, watermark=10**9)
        model = constant_model(0.6)
        scatter_batch(first, model, 0, fragments)
        flush_fragments(0, fragments)
        assert not fragments.fragment_path(0, 2).exists()
        scatter_batch(second, model, 0, fragments)
        flush_fragments(0, fragments, final=True)
        data = fragments.fragment_path(0, 2).read_bytes()
        assert data == first.tobytes() + second.tobytes()

    def test_watermark_triggers_write(self, tmp_path):
        fragments = FragmentMatrix(tmp_path, r=1, f=4, watermark=100)
        batch = make_records(0, 3, seed=1)
        scatter_batch(batch, constant_model(0.6), 0, fragments)
        flush_fragments(0, fragments)
        assert fragments.fragment_path(0, 2).read_bytes() == batch.tobytes()
        fragments.close()

    def test_open_handles_reach_disk_after_each_flush(self, tmp_path):
        fragments = FragmentMatrix(tmp_path, r=1, f=4, watermark=100)
        assert fragments.keep_open
        first = make_records(0, 2, seed=1)
        second = make_records(2, 2, seed=1)
        scatter_batch(first, constant_model(0.6), 0, fragments)
        flush_fragments(0, fragments)
        path = fragments.fragment_path(0, 2)
        assert path.stat().st_size == fragments.rows[0].io.bytes_written == 200
        scatter_batch(second, constant_model(0.6), 0, fragments)
        flush_fragments(0, fragments)
        assert path.read_bytes() == first.tobytes() + second.tobytes()
        fragments.close()

    def test_fragments_created_lazily(self, tmp_path):
        fragments = FragmentMatrix(tmp_path, r=2, f=4)
        scatter_batch(make_records(0, 10, seed=1), constant_model(0.6), 0, fragments)
        flush_fragments(0, fragments, final=True)
        flush_fragments(1, fragments, final=True)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["frag_0_2"]

    def test_nonprintable_quarantined(self, tmp_path):
        batch = make_records(0, 10, seed=1)
        batch[3, 5] = 0
        fragments = FragmentMatrix(tmp_path, r=1, f=4)
        scatter_batch(batch, constant_model(0.0), 0, fragments)
        flush_fragments(0, fragments, final=True)
        assert fragments.quarantined == 1
        assert fragments.partition_sizes().sum() == 9
        assert fragments.quarantine_path(0).read_bytes() == batch[3].tobytes()

    def test_cleanup_removes_fragments(self, tmp_path):
        fragments = FragmentMatrix(tmp_path, r=1, f=4)
        scatter_batch(make_records(0, 10, seed=1), constant_model(0.1), 0, fragments)
        flush_fragments(0, fragments, final=True)
        fragments.cleanup()
        assert not fragments.fragment_path(0, 0).exists()


class TestPartitionPhase:
    @pytest.mark.parametrize("descriptor_budget", [512, 1])
    def test_conservation(self, tmp_path, model, descriptor_budget):
        records = make_records(0, 3000, seed=33)
        input = write_records(tmp_path / "in.bin", records)
        work = tmp_path / "work"
        work.mkdir()
        fragments = FragmentMatrix(work, r=3, f=8, watermark=4096, descriptor_budget=descriptor_budget)
        sizes = run_partition_phase(input, model, fragments, plan_reads(input, 3), 250)

        expected = np.bincount(model.partition_many(encode_records(records), 8), minlength=8)
        assert sizes.tolist() == expected.tolist()

        total_bytes = 0
        checksum = 0
        for path in work.iterdir():
            data = path.read_bytes()
            total_bytes += len(data)
            checksum = (checksum + checksum_records(as_records(data))) % 2**64
        assert total_bytes == 3000 * 100
        assert checksum == checksum_records(records)
        assert fragments.io().bytes_read == fragments.io().bytes_written == 300_000

        check_partition_order(scan_fragment_bounds(fragments))

    def test_fragment_rows_hold_their_reader_records(self, tmp_path, model):
        records = make_records(0, 600, seed=2)
        input = write_records(tmp_path / "in.bin", records)
        work = tmp_path / "work"
        work.mkdir()
        fragments = FragmentMatrix(work, r=2, f=4)
        run_partition_phase(input, model, fragments, plan_reads(input, 2), 100)
        worker_0 = b"".join(
            fragments.fragment_path(0, j).read_bytes()
            for j in range(4)
            if fragments.fragment_path(0, j).exists()
        )
        assert checksum_records(as_records(worker_0)) == checksum_records(records[:300])


class TestPartitionOrder:
    def test_accepts_ordered_bounds(self):
        check_partition_order([(0, 10), None, (10, 20), (25, 30)])

    def test_rejects_overlap(self):
        with pytest.raises(InvariantViolationError):
            check_partition_order([(0, 10), None, (5, 20)])

"""Tests for the per-partition learned sort."""

import numpy as np
import pytest

from elsort.cdf_model import draw_sample, train
from elsort.datagen import make_records
from elsort.encoding import encode_records
from elsort.exceptions import PartitionOverflowError
from elsort.internal_sort import SortBuffer, SortStats, learned_sort, touch_up
from elsort.records import checksum_records, key_strings, write_records

from .conftest import constant_model, key_list, records_from_keys, sorted_records


@pytest.fixture(scope="module")
def model(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "sample.bin"
    f = write_records(path, make_records(0, 20_000, seed=77))
    return train(draw_sample(f, rate=0.1, mode="whole-file"), leaves=128)


def distinct_keys(n: int) -> list[bytes]:
    return [f"K{i:09d}".encode() for i in range(n)]


class TestTouchUp:
    def test_sorted_input(self):
        records = records_from_keys(distinct_keys(50))
        stats = SortStats()
        out = touch_up(records, stats)
        np.testing.assert_array_equal(out, records)
        assert stats.comparisons == 49
        assert stats.shifts == 0

    def test_single_displacement(self):
        keys = distinct_keys(20)
        moved = keys[:5] + [keys[15]] + keys[5:15] + keys[16:]
        stats = SortStats()
        out = touch_up(records_from_keys(moved), stats)
        assert key_list(out) == keys
        assert stats.shifts == 10

    def test_stable_for_equal_keys(self):
        records = records_from_keys([b"BBBBBBBBBB", b"AAAAAAAAAA", b"BBBBBBBBBB"])
        out = touch_up(records)
        np.testing.assert_array_equal(out, records[[1, 0, 2]])


class TestSortBuffer:
    def test_capacity_overflow(self):
        with pytest.raises(PartitionOverflowError):
            SortBuffer(records_from_keys(distinct_keys(3)), capacity=2)

    def test_encodes_keys(self):
        records = make_records(0, 10, seed=4)
        buffer = SortBuffer(records)
        np.testing.assert_array_equal(buffer.encoded, encode_records(records))
        assert buffer.nbytes == 1000


class TestLearnedSort:
    def test_empty_and_single(self, model):
        for n in (0, 1):
            out = learned_sort(SortBuffer(make_records(0, n, seed=1)), model, 0, 1)
            assert len(out) == n

    def test_already_sorted(self, model):
        records = sorted_records(make_records(0, 2000, seed=6))
        out = learned_sort(SortBuffer(records), model, 0, 1)
        np.testing.assert_array_equal(out.records, records)
        assert out.stats.shifts == 0
        assert out.stats.comparisons <= 1999

    def test_reverse_sorted(self, model):
        records = sorted_records(make_records(0, 1000, seed=7))[::-1].copy()
        out = learned_sort(SortBuffer(records), model, 0, 1)
        assert out.is_sorted()
        assert checksum_records(out.records) == checksum_records(records)

    def test_all_equal_keys(self, model):
        records = records_from_keys([b"MMMMMMMMMM"] * 100)
        out = learned_sort(SortBuffer(records), model, 0, 1)
        assert out.is_sorted()
        assert checksum_records(out.records) == checksum_records(records)
        assert out.stats.spilled == 96
        assert out.stats.shifts == 0

    def test_nine_byte_prefix_collisions(self, model):
        rng = np.random.default_rng(12)
        keys = [b"QQQQQQQQQ" + bytes([c]) for c in rng.integers(32, 127, size=300)]
        out = learned_sort(SortBuffer(records_from_keys(keys)), model, 0, 1)
        assert key_list(out.records) == sorted(keys)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_comparison_sort(self, model, seed):
        f = 8
        records = make_records(0, 20_000, seed=1000 + seed, skew=seed % 2 == 1)
        parts = model.partition_many(encode_records(records), f)
        for j in range(f):
            chunk = records[parts == j]
            out = learned_sort(SortBuffer(chunk), model, j, f)
            assert key_list(out.records) == sorted(key_list(chunk))
            assert checksum_records(out.records) == checksum_records(chunk)
            assert out.stats.shifts == 0

    def test_distinct_keys_exact_output(self, model):
        records = make_records(0, 5000, seed=99)
        out = learned_sort(SortBuffer(records), model, 0, 1)
        np.testing.assert_array_equal(out.records, sorted_records(records))
        assert (key_strings(out.records)[:-1] <= key_strings(out.records)[1:]).all()

    def test_slots_and_spill_merge_before_touch_up(self):
        keys = [b"Z" * 10, b"A" * 10, b"M" * 10, b"C" * 10, b"Y" * 10, b"B" * 10, b"N" * 10]
        records = records_from_keys(keys)
        out = learned_sort(SortBuffer(records), constant_model(0.0), 0, 1)
        assert key_list(out.records) == sorted(keys)
        assert out.stats.spilled == len(keys) - 4
        assert out.stats.shifts == 0

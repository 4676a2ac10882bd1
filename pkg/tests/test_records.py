"""Tests for the record format and checksums."""

import numpy as np
import pytest

from elsort.exceptions import DataFormatError, NonPrintableKeyError
from elsort.records import (
    FNV_OFFSET_BASIS,
    RECORD_SIZE,
    Ordering,
    Record,
    RecordFile,
    checksum_records,
    compare_keys,
    file_checksum,
    hash_records,
    key_strings,
    printable_mask,
    record_hash,
    write_records,
)

from .conftest import blank_records, records_from_keys


def make(key: bytes, fill: bytes = b"x") -> Record:
    return Record(key=key, payload=fill * 90)


class TestCompareKeys:
    def test_last_byte_decides(self):
        assert compare_keys(make(b"AAAAAAAAAA"), make(b"AAAAAAAAAB")) == Ordering.LESS

    def test_payload_ignored(self):
        assert compare_keys(make(b"AAAAAAAAAA", b"x"), make(b"AAAAAAAAAA", b"y")) == Ordering.EQUAL

    def test_printable_extremes(self):
        assert compare_keys(make(b"!AAAAAAAAA"), make(b"~AAAAAAAAA")) == Ordering.LESS
        assert compare_keys(make(b"~AAAAAAAAA"), make(b"!AAAAAAAAA")) == Ordering.GREATER


class TestRecord:
    def test_round_trip_bytes(self):
        record = make(b"0123456789")
        assert Record.from_bytes(record.to_bytes()) == record
        assert len(record.to_bytes()) == RECORD_SIZE

    def test_rejects_nonprintable_key(self):
        with pytest.raises(NonPrintableKeyError):
            Record(key=b"ABC\x01EFGHIJ", payload=b"x" * 90)

    def test_rejects_wrong_lengths(self):
        with pytest.raises(ValueError):
            Record(key=b"short", payload=b"x" * 90)
        with pytest.raises(DataFormatError):
            Record.from_bytes(b"x" * 99)


class TestHash:
    def test_fnv1a_reference_vectors(self):
        assert record_hash(b"") == FNV_OFFSET_BASIS == 0xCBF29CE484222325
        assert record_hash(b"a") == 0xAF63DC4C8601EC8C
        assert record_hash(b"foobar") == 0x85944171F73967E8

    def test_zero_record(self):
        h = 0xCBF29CE484222325
        for _ in range(RECORD_SIZE):
            h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        assert record_hash(bytes(RECORD_SIZE)) == h

    def test_vectorized_hash_matches_scalar(self):
        records = records_from_keys([b"ABCDEFGHIJ", b"          ", b"~~~~~~~~~~"])
        hashes = hash_records(records)
        for row, h in zip(records, hashes):
            assert int(h) == record_hash(row.tobytes())


class TestChecksum:
    def test_empty_is_zero(self):
        assert checksum_records(np.empty((0, RECORD_SIZE), dtype=np.uint8)) == 0

    def test_sum_of_hashes(self):
        records = records_from_keys([b"CCCCCCCCCC", b"AAAAAAAAAA", b"BBBBBBBBBB"])
        expected = sum(record_hash(r.tobytes()) for r in records) % 2**64
        assert checksum_records(records) == expected

    def test_order_invariant(self):
        records = records_from_keys([bytes([65 + i]) * 10 for i in range(20)])
        shuffled = records[np.random.default_rng(3).permutation(20)]
        assert checksum_records(shuffled) == checksum_records(records)

    def test_detects_changed_byte(self):
        records = blank_records(4)
        changed = records.copy()
        changed[2, 50] = ord("y")
        assert checksum_records(changed) != checksum_records(records)


class TestRecordFile:
    def test_open_and_read(self, tmp_path):
        records = records_from_keys([b"KKKKKKKKKK", b"JJJJJJJJJJ", b"LLLLLLLLLL"])
        write_records(tmp_path / "f.bin", records)
        f = RecordFile.open(tmp_path / "f.bin")
        assert f.record_count == 3
        assert f.byte_length == 300
        np.testing.assert_array_equal(f.read(1, 5), records[1:])
        np.testing.assert_array_equal(f.read_at(np.array([2, 0])), records[[2, 0]])

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"x" * 250)
        with pytest.raises(DataFormatError):
            RecordFile.open(path)

    def test_iter_batches_counts_bytes(self, tmp_path):
        from elsort.instrumentation import IoCounter

        f = write_records(tmp_path / "f.bin", blank_records(10))
        counter = IoCounter()
        sizes = [b.shape[0] for b in f.iter_batches(4, counter=counter)]
        assert sizes == [4, 4, 2]
        assert counter.bytes_read == 1000

    def test_file_checksum_matches_in_memory(self, tmp_path):
        records = records_from_keys([bytes([40 + i]) * 10 for i in range(30)])
        f = write_records(tmp_path / "f.bin", records)
        assert file_checksum(f, chunk_records=7) == checksum_records(records)


def test_key_strings_compare_bytewise():
    keys = key_strings(records_from_keys([b"B         ", b"A~~~~~~~~~"]))
    assert keys[1] < keys[0]


def test_printable_mask():
    records = blank_records(3)
    records[1, 9] = 127
    records[2, 0] = 31
    assert printable_mask(records).tolist() == [True, False, False]

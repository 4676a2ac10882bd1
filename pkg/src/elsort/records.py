"""Fixed-width record format shared by every module.

A record file is a plain concatenation of 100-byte records: a 10-byte
printable-ASCII key followed by a 90-byte payload. There are no headers or
delimiters, so record ``i`` always lives at byte offset ``100 * i``.
"""

import os
from collections.abc import Iterator
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .exceptions import DataFormatError, NonPrintableKeyError
from .instrumentation import IoCounter

KEY_SIZE = 10
PAYLOAD_SIZE = 90
RECORD_SIZE = KEY_SIZE + PAYLOAD_SIZE
PRINTABLE_MIN = 32
PRINTABLE_MAX = 126

FNV_OFFSET_BASIS = 14695981039346656037
FNV_PRIME = 1099511628211
MASK64 = (1 << 64) - 1

Checksum = int


class Ordering(IntEnum):
    """Result of a key comparison."""

    LESS = -1
    EQUAL = 0
    GREATER = 1


def is_printable(data: bytes) -> bool:
    """Check that every byte is printable ASCII (32..126)."""
    return all(PRINTABLE_MIN <= b <= PRINTABLE_MAX for b in data)


class Record(BaseModel):
    """A single 100-byte record."""

    model_config = ConfigDict(frozen=True)

    key: bytes
    payload: bytes

    @field_validator("key")
    @classmethod
    def _check_key(cls, key: bytes) -> bytes:
        if len(key) != KEY_SIZE:
            raise ValueError(f"key must be {KEY_SIZE} bytes (got {len(key)})")
        if not is_printable(key):
            raise NonPrintableKeyError(f"key {key!r} contains non-printable bytes")
        return key

    @field_validator("payload")
    @classmethod
    def _check_payload(cls, payload: bytes) -> bytes:
        if len(payload) != PAYLOAD_SIZE:
            raise ValueError(f"payload must be {PAYLOAD_SIZE} bytes (got {len(payload)})")
        return payload

    def to_bytes(self) -> bytes:
        """Serialize to the 100-byte on-disk form."""
        return self.key + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Record":
        """Deserialize a 100-byte record."""
        if len(data) != RECORD_SIZE:
            raise DataFormatError(f"record must be {RECORD_SIZE} bytes (got {len(data)})")
        return cls(key=bytes(data[:KEY_SIZE]), payload=bytes(data[KEY_SIZE:]))


def compare_keys(a: Record, b: Record) -> Ordering:
    """Byte-lexicographic comparison of the 10-byte keys; payloads never participate."""
    if a.key < b.key:
        return Ordering.LESS
    if a.key > b.key:
        return Ordering.GREATER
    return Ordering.EQUAL


def record_hash(record: Record | bytes) -> int:
    """FNV-1a 64-bit hash over all 100 bytes of a record."""
    data = record.to_bytes() if isinstance(record, Record) else record
    h = FNV_OFFSET_BASIS
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def as_records(data: bytes | bytearray | memoryview) -> np.ndarray:
    """View a byte buffer as an (n, 100) uint8 array."""
    if len(data) % RECORD_SIZE:
        raise DataFormatError(
            f"buffer of {len(data)} bytes is not a whole number of {RECORD_SIZE}-byte records"
        )
    return np.frombuffer(data, dtype=np.uint8).reshape(-1, RECORD_SIZE)


def key_strings(records: np.ndarray) -> np.ndarray:
    """Keys as an ``S10`` array; numpy compares these byte-lexicographically."""
    keys = np.ascontiguousarray(records[:, :KEY_SIZE])
    return keys.view(f"S{KEY_SIZE}").ravel()


def printable_mask(records: np.ndarray) -> np.ndarray:
    """Boolean mask of records whose key bytes are all printable."""
    keys = records[:, :KEY_SIZE]
    return ((keys >= PRINTABLE_MIN) & (keys <= PRINTABLE_MAX)).all(axis=1)


def hash_records(records: np.ndarray) -> np.ndarray:
    """Vectorized FNV-1a 64-bit hash of each row of an (n, 100) array."""
    columns = np.ascontiguousarray(records.T)
    h = np.full(records.shape[0], FNV_OFFSET_BASIS, dtype=np.uint64)
    prime = np.uint64(FNV_PRIME)
    for column in columns:
        h ^= column
        h *= prime
    return h


def checksum_records(records: np.ndarray) -> int:
    """Sum of record hashes modulo 2^64."""
    if records.shape[0] == 0:
        return 0
    return int(hash_records(records).sum(dtype=np.uint64))


@dataclass(frozen=True)
class RecordFile:
    """A file of contiguous 100-byte records."""

    path: Path
    record_count: int

    @property
    def byte_length(self) -> int:
        return self.record_count * RECORD_SIZE

    @classmethod
    def open(cls, path: Path | str) -> "RecordFile":
        """
        Describe an existing record file.

        Raises:
            DataFormatError: If the file length is not a multiple of 100.
            FileNotFoundError: If the file does not exist.
        """
        path = Path(path)
        size = path.stat().st_size
        if size % RECORD_SIZE:
            raise DataFormatError(
                f"{path} is truncated: {size} bytes is not a multiple of {RECORD_SIZE}"
            )
        return cls(path=path, record_count=size // RECORD_SIZE)

    def read(self, start: int, count: int, counter: IoCounter | None = None) -> np.ndarray:
        """Read ``count`` records starting at record index ``start``."""
        count = max(0, min(count, self.record_count - start))
        with open(self.path, "rb") as f:
            f.seek(start * RECORD_SIZE)
            data = f.read(count * RECORD_SIZE)
        if counter is not None:
            counter.add_read(len(data))
        return as_records(data)

    def read_at(self, indices: np.ndarray, counter: IoCounter | None = None) -> np.ndarray:
        """Positioned reads of individual records (sorted indices read fastest)."""
        out = np.empty((len(indices), RECORD_SIZE), dtype=np.uint8)
        fd = os.open(self.path, os.O_RDONLY)
        try:
            for row, index in enumerate(indices):
                data = os.pread(fd, RECORD_SIZE, int(index) * RECORD_SIZE)
                if len(data) != RECORD_SIZE:
                    raise DataFormatError(f"short read at record {index} of {self.path}")
                out[row] = np.frombuffer(data, dtype=np.uint8)
        finally:
            os.close(fd)
        if counter is not None:
            counter.add_read(len(indices) * RECORD_SIZE)
        return out

    def iter_batches(
        self,
        batch_records: int,
        start: int = 0,
        count: int | None = None,
        counter: IoCounter | None = None,
    ) -> Iterator[np.ndarray]:
        """Yield (n, 100) arrays of at most ``batch_records`` records."""
        remaining = self.record_count - start if count is None else count
        with open(self.path, "rb") as f:
            f.seek(start * RECORD_SIZE)
            while remaining > 0:
                n = min(batch_records, remaining)
                data = f.read(n * RECORD_SIZE)
                if len(data) != n * RECORD_SIZE:
                    raise DataFormatError(f"unexpected end of {self.path}")
                if counter is not None:
                    counter.add_read(len(data))
                remaining -= n
                yield as_records(data)


def file_checksum(
    f: RecordFile | Path | str,
    chunk_records: int = 100_000,
    counter: IoCounter | None = None,
) -> Checksum:
    """
    Order-invariant checksum of a record file.

    Streams the file in chunks, so memory use is bounded by ``chunk_records``.

    Raises:
        DataFormatError: If the file length is not a multiple of 100.
    """
    if not isinstance(f, RecordFile):
        f = RecordFile.open(f)
    total = 0
    for batch in f.iter_batches(chunk_records, counter=counter):
        total = (total + checksum_records(batch)) & MASK64
    return total


def write_records(path: Path | str, records: np.ndarray | list[Record]) -> RecordFile:
    """Write records to ``path``, replacing any existing file."""
    path = Path(path)
    with open(path, "wb") as f:
        if isinstance(records, np.ndarray):
            f.write(np.ascontiguousarray(records).tobytes())
            count = records.shape[0]
        else:
            for record in records:
                f.write(record.to_bytes())
            count = len(records)
    return RecordFile(path=path, record_count=count)

"""Record generator (uniform and skewed keys) and streaming sort validator.

Every record is a pure function of ``(seed, index)``: keys come from a
counter-based splitmix64 stream, so any index range can be produced
independently and parallel generation matches the sequential output byte
for byte.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from .cdf_model import radix_partition_many
from .encoding import encode_records
from .exceptions import StorageError, ValidationError
from .records import (
    KEY_SIZE,
    MASK64,
    PAYLOAD_SIZE,
    PRINTABLE_MAX,
    PRINTABLE_MIN,
    RECORD_SIZE,
    RecordFile,
    checksum_records,
    key_strings,
    printable_mask,
)
from .writer import pwrite_all

logger = logging.getLogger(__name__)

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB

SKEW_ENTRIES = 128
SKEW_PREFIX = 6
SKEW_SALT = 0x5EED5CE3
PRINTABLE_COUNT = PRINTABLE_MAX - PRINTABLE_MIN + 1
DIGITS_PER_DRAW = KEY_SIZE // 2
DEFAULT_CHUNK_RECORDS = 100_000

_HEX = np.frombuffer(b"0123456789abcdef", dtype=np.uint8)
_HEADER_SIZE = 34
_FILLER_SIZE = PAYLOAD_SIZE - _HEADER_SIZE


def splitmix64(seed: int, counters: np.ndarray) -> np.ndarray:
    """
    The ``counter``-th output of splitmix64 started at ``seed``.

    ``splitmix64(seed, [1, 2, 3])`` equals the first three outputs of the
    sequential generator.
    """
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + np.asarray(counters, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_2)
        return z ^ (z >> np.uint64(31))


def _printable_digits(draws: np.ndarray, width: int) -> np.ndarray:
    """Split 64-bit draws into ``width`` printable bytes, most significant first."""
    out = np.empty((len(draws), width), dtype=np.uint8)
    value = draws.copy()
    base = np.uint64(PRINTABLE_COUNT)
    for position in range(width - 1, -1, -1):
        out[:, position] = (value % base).astype(np.uint8) + PRINTABLE_MIN
        value //= base
    return out


class SkewTable:
    """128 printable 6-byte key prefixes derived from the seed."""

    def __init__(self, entries: np.ndarray):
        entries = np.asarray(entries, dtype=np.uint8)
        if entries.shape != (SKEW_ENTRIES, SKEW_PREFIX):
            raise ValidationError(
                f"skew table must be {SKEW_ENTRIES}x{SKEW_PREFIX} bytes (got {entries.shape})"
            )
        if ((entries < PRINTABLE_MIN) | (entries > PRINTABLE_MAX)).any():
            raise ValidationError("skew table entries must be printable")
        self.entries = entries

    @classmethod
    def from_seed(cls, seed: int) -> "SkewTable":
        draws = splitmix64(seed ^ SKEW_SALT, np.arange(1, SKEW_ENTRIES + 1))
        return cls(_printable_digits(draws, SKEW_PREFIX))

    def __len__(self) -> int:
        return SKEW_ENTRIES

    def __getitem__(self, index: int) -> bytes:
        return self.entries[index].tobytes()


def skew_index(rec_idx: int | np.ndarray) -> int | np.ndarray:
    """floor(log2(rec_idx)) mod 128 for a 1-based record index."""
    if isinstance(rec_idx, np.ndarray):
        _, exponent = np.frexp(rec_idx.astype(np.float64))
        return (exponent.astype(np.int64) - 1) % SKEW_ENTRIES
    if rec_idx < 1:
        raise ValidationError(f"record index must be 1-based (got {rec_idx})")
    return (rec_idx.bit_length() - 1) % SKEW_ENTRIES


def _payloads(seed: int, indices: np.ndarray) -> np.ndarray:
    """``<seed hex> <index hex> `` followed by a letter run that starts at index mod 26."""
    n = len(indices)
    payload = np.empty((n, PAYLOAD_SIZE), dtype=np.uint8)
    seed_hex = np.frombuffer(f"{seed & MASK64:016x}".encode(), dtype=np.uint8)
    payload[:, :16] = seed_hex
    payload[:, 16] = ord(" ")
    shifts = np.arange(60, -1, -4, dtype=np.uint64)
    nibbles = (indices.astype(np.uint64)[:, None] >> shifts) & np.uint64(0xF)
    payload[:, 17:33] = _HEX[nibbles.astype(np.int64)]
    payload[:, 33] = ord(" ")
    letters = (indices.astype(np.int64)[:, None] + np.arange(_FILLER_SIZE)) % 26
    payload[:, _HEADER_SIZE:] = (letters + ord("A")).astype(np.uint8)
    return payload


def make_records(
    start: int,
    count: int,
    seed: int,
    skew: bool = False,
    table: SkewTable | None = None,
) -> np.ndarray:
    """Records ``start .. start + count - 1`` of the stream for ``seed``."""
    indices = np.arange(start, start + count, dtype=np.int64)
    records = np.empty((count, RECORD_SIZE), dtype=np.uint8)
    if count == 0:
        return records

    counters = indices.astype(np.uint64) * np.uint64(2) + np.uint64(1)
    records[:, :DIGITS_PER_DRAW] = _printable_digits(splitmix64(seed, counters), DIGITS_PER_DRAW)
    records[:, DIGITS_PER_DRAW:KEY_SIZE] = _printable_digits(
        splitmix64(seed, counters + np.uint64(1)), DIGITS_PER_DRAW
    )

    if skew:
        table = table or SkewTable.from_seed(seed)
        records[:, :SKEW_PREFIX] = table.entries[skew_index(indices + 1)]

    records[:, KEY_SIZE:] = _payloads(seed, indices)
    return records


def generate(
    count: int,
    seed: int,
    skew: bool,
    out: Path,
    workers: int = 1,
    chunk_records: int = DEFAULT_CHUNK_RECORDS,
) -> RecordFile:
    """
    Write ``count`` generated records to ``out``.

    Args:
        count: Number of records.
        seed: 64-bit seed.
        skew: Replace the 6 leading key bytes from the skew table.
        out: Destination path (replaced if it exists).
        workers: Threads filling disjoint index ranges.
        chunk_records: Records generated per write.

    Returns:
        The generated file.

    Raises:
        ValidationError: If count is negative.
        StorageError: If the destination cannot be written.
    """
    if count < 0:
        raise ValidationError(f"record count cannot be negative (got {count})")
    out = Path(out)
    table = SkewTable.from_seed(seed) if skew else None
    chunks = [(start, min(chunk_records, count - start)) for start in range(0, count, chunk_records)]

    try:
        with open(out, "wb") as f:
            f.truncate(count * RECORD_SIZE)
        fd = os.open(out, os.O_WRONLY)
    except OSError as e:
        raise StorageError(f"Cannot write {out}: {e}") from e

    def fill(chunk: tuple[int, int]) -> None:
        start, n = chunk
        pwrite_all(fd, make_records(start, n, seed, skew, table).tobytes(), start * RECORD_SIZE)

    try:
        with ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="gen") as pool:
            list(pool.map(fill, chunks))
    except OSError as e:
        raise StorageError(f"Cannot write {out}: {e}") from e
    finally:
        os.close(fd)

    logger.info("Generated %d %s records in %s", count, "skewed" if skew else "uniform", out)
    return RecordFile(path=out, record_count=count)


class ValidationReport(BaseModel):
    """Result of scanning a record file for order and checksum."""

    sorted: bool
    first_violation_index: int | None = None
    checksum: int
    record_count: int
    duplicate_keys: int = 0
    nonprintable_keys: int = 0


def validate(f: RecordFile | Path | str, chunk_records: int = DEFAULT_CHUNK_RECORDS) -> ValidationReport:
    """
    Stream through a record file checking that keys never decrease.

    Memory use is bounded by ``chunk_records`` whatever the file size.
    ``first_violation_index`` is the index of the first record whose key is
    smaller than its predecessor's.

    Raises:
        DataFormatError: If the file is truncated.
    """
    if not isinstance(f, RecordFile):
        f = RecordFile.open(f)

    checksum = 0
    first_violation: int | None = None
    duplicates = 0
    nonprintable = 0
    previous: bytes | None = None
    position = 0

    for batch in f.iter_batches(chunk_records):
        keys = key_strings(batch)
        if previous is not None:
            keys = np.concatenate((np.array([previous], dtype=keys.dtype), keys))
        descents = np.flatnonzero(keys[1:] < keys[:-1])
        if first_violation is None and descents.size:
            offset = 0 if previous is None else 1
            first_violation = position + int(descents[0]) + 1 - offset
        duplicates += int((keys[1:] == keys[:-1]).sum())
        nonprintable += int((~printable_mask(batch)).sum())
        checksum = (checksum + checksum_records(batch)) & MASK64
        previous = bytes(key_strings(batch)[-1])
        position += batch.shape[0]

    return ValidationReport(
        sorted=first_violation is None,
        first_violation_index=first_violation,
        checksum=checksum,
        record_count=f.record_count,
        duplicate_keys=duplicates,
        nonprintable_keys=nonprintable,
    )


def key_histogram(f: RecordFile | Path | str, bins: int = 1000) -> np.ndarray:
    """Record counts per equi-width bin of the encoded key space."""
    if not isinstance(f, RecordFile):
        f = RecordFile.open(f)
    counts = np.zeros(bins, dtype=np.int64)
    for batch in f.iter_batches(DEFAULT_CHUNK_RECORDS):
        batch = batch[printable_mask(batch)]
        counts += np.bincount(radix_partition_many(encode_records(batch), bins), minlength=bins)
    return counts

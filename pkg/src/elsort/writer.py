"""Sorter wave sizing, memory admission and offset writes into the output."""

import itertools
import logging
import os
import shutil
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cdf_model import PartitionPlan
from .exceptions import (
    DataFormatError,
    InsufficientSpaceError,
    InvariantViolationError,
    OutputWriteError,
    OversizedPartitionError,
)
from .instrumentation import IoCounter
from .internal_sort import SortBuffer
from .partitioner import FragmentMatrix
from .records import RECORD_SIZE, RecordFile, as_records

logger = logging.getLogger(__name__)

DEFAULT_COALESCE_BYTES = 100 * 1024
WRITE_RETRIES = 3


@dataclass(frozen=True)
class SorterWave:
    """How many partitions are sorted at once."""

    s: int
    partitions: int

    @property
    def assignment(self) -> int:
        """Partitions each sorter handles, rounded up."""
        return -(-self.partitions // self.s)


def compute_wave(sizes: np.ndarray, memory_budget: int, workers: int) -> SorterWave:
    """
    Largest s whose first s partitions fit the memory budget together.

    Args:
        sizes: S, record count per partition.
        memory_budget: M in bytes.
        workers: Available sorter workers.

    Returns:
        The wave, with s clamped to [1, min(f, workers)].

    Raises:
        OversizedPartitionError: If any partition alone exceeds M.
    """
    byte_sizes = np.asarray(sizes, dtype=np.int64) * RECORD_SIZE
    f = len(byte_sizes)
    oversized = np.flatnonzero(byte_sizes > memory_budget)
    if oversized.size:
        j = int(oversized[0])
        raise OversizedPartitionError(
            f"partition {j} needs {int(byte_sizes[j])} bytes but the memory budget is "
            f"{memory_budget}; increase the partition count (--partitions)"
        )
    fitting = int(np.searchsorted(np.cumsum(byte_sizes), memory_budget, side="right"))
    s = max(1, min(fitting, f, workers))
    return SorterWave(s=s, partitions=f)


class MemoryBudget:
    """Admits partitions into memory while their total stays within M."""

    def __init__(self, limit: int):
        self.limit = limit
        self.in_use = 0
        self.peak = 0
        self.admitted = 0
        self._condition = threading.Condition()

    def can_acquire(self, nbytes: int) -> bool:
        with self._condition:
            return self.in_use + nbytes <= self.limit

    def acquire(self, nbytes: int) -> None:
        """
        Block until ``nbytes`` fit, then reserve them.

        Raises:
            OversizedPartitionError: If ``nbytes`` alone exceeds the limit.
        """
        if nbytes > self.limit:
            raise OversizedPartitionError(
                f"cannot admit {nbytes} bytes under a memory budget of {self.limit}"
            )
        with self._condition:
            self._condition.wait_for(lambda: self.in_use + nbytes <= self.limit)
            self.in_use += nbytes
            self.admitted += 1
            self.peak = max(self.peak, self.in_use)

    def release(self, nbytes: int) -> None:
        with self._condition:
            self.in_use -= nbytes
            self._condition.notify_all()

    def get_statistics(self) -> dict:
        """Current and peak admitted bytes."""
        with self._condition:
            return {
                "limit": self.limit,
                "in_use": self.in_use,
                "peak": self.peak,
                "admitted": self.admitted,
            }


class PartitionCounter:
    """Hands out partition indices 0..f-1 exactly once across threads."""

    def __init__(self, f: int):
        self.f = f
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def next(self) -> int | None:
        with self._lock:
            j = next(self._counter)
        return j if j < self.f else None


def gather_partition(
    j: int,
    fragments: FragmentMatrix,
    counter: IoCounter | None = None,
    capacity: int | None = None,
) -> SortBuffer:
    """
    Concatenate fragments F[0][j]..F[r-1][j], deleting each file after reading it.

    Missing fragment files count as empty.

    Raises:
        DataFormatError: If a fragment is not a whole number of records.
    """
    chunks = []
    for row in fragments.rows:
        path = fragments.fragment_path(row.worker, j)
        try:
            with open(path, "rb") as f:
                data = f.read()
        except FileNotFoundError:
            continue
        path.unlink(missing_ok=True)
        if counter is not None:
            counter.add_read(len(data))
        try:
            chunks.append(as_records(data))
        except DataFormatError as e:
            raise DataFormatError(f"Malformed fragment {path}: {e}") from e

    if not chunks:
        records = np.empty((0, RECORD_SIZE), dtype=np.uint8)
    elif len(chunks) == 1:
        records = chunks[0].copy()
    else:
        records = np.concatenate(chunks)
    return SortBuffer(records=records, capacity=capacity)


def pwrite_all(fd: int, data: bytes | memoryview, offset: int, retries: int = WRITE_RETRIES) -> None:
    """Write all of ``data`` at ``offset``, retrying writes that make no progress."""
    view = memoryview(data)
    failures = 0
    while view:
        try:
            written = os.pwrite(fd, view, offset)
        except OSError as e:
            raise OutputWriteError(f"Write at byte {offset} failed: {e}") from e
        if written == 0:
            failures += 1
            if failures > retries:
                raise OutputWriteError(f"Write at byte {offset} made no progress after {retries} retries")
            logger.warning("Short write at byte %d, retrying (%d/%d)", offset, failures, retries)
            continue
        view = view[written:]
        offset += written


class CoalesceBuffer:
    """Fixed-size staging buffer flushed sequentially from a start offset."""

    def __init__(self, fd: int, offset: int, size: int = DEFAULT_COALESCE_BYTES, counter: IoCounter | None = None):
        self.fd = fd
        self.offset = offset
        self.size = max(RECORD_SIZE, size - size % RECORD_SIZE)
        self.counter = counter
        self.flushes = 0
        self.flush_seconds = 0.0
        self._buffer = bytearray()

    def append(self, records: np.ndarray) -> None:
        """Copy records in, flushing each time the buffer fills."""
        data = memoryview(np.ascontiguousarray(records).reshape(-1))
        while data:
            room = self.size - len(self._buffer)
            self._buffer += data[:room]
            data = data[room:]
            if len(self._buffer) >= self.size:
                self.flush()

    def flush(self) -> None:
        if not self._buffer:
            return
        start = time.monotonic()
        pwrite_all(self.fd, self._buffer, self.offset)
        self.flush_seconds += time.monotonic() - start
        if self.counter is not None:
            self.counter.add_written(len(self._buffer))
        self.offset += len(self._buffer)
        self.flushes += 1
        self._buffer.clear()


def write_partition(
    j: int,
    sorted: SortBuffer,
    plan: PartitionPlan,
    fd: int,
    coalesce_bytes: int = DEFAULT_COALESCE_BYTES,
    counter: IoCounter | None = None,
) -> float:
    """
    Write a sorted partition at ``plan.offsets[j]`` through a coalesce buffer.

    Args:
        j: Partition index.
        sorted: Sorted records of the partition.
        plan: Partition plan with the final sizes.
        fd: The calling sorter's own descriptor on the output file.
        coalesce_bytes: Coalesce buffer size.
        counter: Optional I/O counter.

    Returns:
        Seconds spent in flushes.

    Raises:
        InvariantViolationError: If the buffer does not match the planned range.
        OutputWriteError: If writing fails.
    """
    start, end = plan.byte_range(j)
    if sorted.nbytes != end - start:
        raise InvariantViolationError(
            f"partition {j} holds {sorted.nbytes} bytes but its planned range is "
            f"[{start}, {end})"
        )
    if not len(sorted):
        return 0.0
    buffer = CoalesceBuffer(fd, start, coalesce_bytes, counter)
    buffer.append(sorted.records)
    buffer.flush()
    if buffer.offset != end:
        raise InvariantViolationError(f"partition {j} ended at byte {buffer.offset}, expected {end}")
    return buffer.flush_seconds


def create_sparse_output(path: Path, byte_length: int) -> RecordFile:
    """
    Create (or replace) ``path`` with a logical size of ``byte_length``.

    Blocks are not allocated up front where the filesystem supports sparse
    files.

    Raises:
        InsufficientSpaceError: If the destination filesystem lacks the space.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reclaimable = path.stat().st_size if path.exists() else 0
    free = shutil.disk_usage(path.parent).free
    if byte_length > free + reclaimable:
        raise InsufficientSpaceError(
            f"{path.parent} has {free} bytes free but the output needs {byte_length}"
        )
    with open(path, "wb") as f:
        f.truncate(byte_length)
    logger.debug("Created output %s with %d bytes", path, byte_length)
    return RecordFile(path=path, record_count=byte_length // RECORD_SIZE)

"""External mergesort baseline: sorted runs, then a heap-based k-way merge."""

import heapq
import logging
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .exceptions import FragmentWriteError, OutputWriteError, ValidationError
from .instrumentation import MERGESORT_PHASES, IoCounter, PartitionStats, PhaseRecorder, RunReport
from .records import RECORD_SIZE, RecordFile, as_records, key_strings
from .sorter import make_run_dir, open_input

logger = logging.getLogger(__name__)

DEFAULT_MERGE_BUFFER = 1024 * 1024


@dataclass(frozen=True)
class Run:
    """A temporary file of sorted records."""

    path: Path
    record_count: int


def run_capacity(memory_budget: int, workers: int) -> int:
    """Records per run: each worker's share of the memory budget."""
    if memory_budget < RECORD_SIZE:
        raise ValidationError(f"Memory budget must hold at least one record (got {memory_budget})")
    return max(1, memory_budget // max(1, workers) // RECORD_SIZE)


def create_runs(
    input: RecordFile,
    memory_budget: int,
    workers: int,
    run_dir: Path,
    counter: IoCounter | None = None,
) -> list[Run]:
    """
    Cut the input into memory-sized ranges, sort each, and write it as a run.

    Returns:
        Runs in input order.

    Raises:
        FragmentWriteError: If a run file cannot be written.
    """
    capacity = run_capacity(memory_budget, workers)
    ranges = [
        (index, start, min(capacity, input.record_count - start))
        for index, start in enumerate(range(0, input.record_count, capacity))
    ]

    def make_run(job: tuple[int, int, int]) -> tuple[Run, IoCounter]:
        index, start, count = job
        io = IoCounter()
        records = input.read(start, count, io)
        ordered = records[np.argsort(key_strings(records), kind="stable")]
        path = run_dir / f"run_0_{index:06d}"
        try:
            with open(path, "wb") as f:
                f.write(ordered.tobytes())
        except OSError as e:
            raise FragmentWriteError(f"Failed writing run {path}: {e}") from e
        io.add_written(ordered.nbytes)
        return Run(path=path, record_count=count), io

    runs = []
    with ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="runs") as pool:
        for run, io in pool.map(make_run, ranges):
            runs.append(run)
            if counter is not None:
                counter.merge(io)

    logger.info("Created %d runs of up to %d records", len(runs), capacity)
    return runs


class RunReader:
    """Buffered sequential reader over one run."""

    def __init__(self, run: Run, buffer_bytes: int, counter: IoCounter | None = None):
        self.run = run
        self.chunk_records = max(1, buffer_bytes // RECORD_SIZE)
        self.counter = counter
        self._file = open(run.path, "rb")
        self._records = np.empty((0, RECORD_SIZE), dtype=np.uint8)
        self._keys: list[bytes] = []
        self._position = 0

    def _refill(self) -> bool:
        data = self._file.read(self.chunk_records * RECORD_SIZE)
        if not data:
            return False
        if self.counter is not None:
            self.counter.add_read(len(data))
        self._records = as_records(data)
        self._keys = key_strings(self._records).tolist()
        self._position = 0
        return True

    def next(self) -> tuple[bytes, np.ndarray] | None:
        """Next (key, record) pair, or None at the end of the run."""
        if self._position >= len(self._keys) and not self._refill():
            return None
        key = self._keys[self._position]
        record = self._records[self._position]
        self._position += 1
        return key, record

    def close(self) -> None:
        self._file.close()


def merge_runs(
    runs: list[Run],
    output: Path,
    buffer_bytes: int = DEFAULT_MERGE_BUFFER,
    counter: IoCounter | None = None,
) -> int:
    """
    Merge sorted runs into ``output`` through a min-heap.

    The heap holds one ``(key, run index)`` entry per non-exhausted run;
    equal keys leave in run order.

    Returns:
        Number of records written.

    Raises:
        OutputWriteError: If the output cannot be written.
    """
    readers = [RunReader(run, buffer_bytes, counter) for run in runs]
    heads: list[np.ndarray | None] = [None] * len(readers)
    heap: list[tuple[bytes, int]] = []
    for index, reader in enumerate(readers):
        item = reader.next()
        if item is not None:
            heads[index] = item[1]
            heap.append((item[0], index))
    heapq.heapify(heap)

    written = 0
    pending = bytearray()
    flush_at = max(RECORD_SIZE, buffer_bytes)
    try:
        with open(output, "wb") as out:
            while heap:
                _, index = heap[0]
                pending += heads[index].tobytes()
                written += 1
                item = readers[index].next()
                if item is None:
                    heapq.heappop(heap)
                else:
                    heads[index] = item[1]
                    heapq.heapreplace(heap, (item[0], index))
                if len(pending) >= flush_at:
                    out.write(pending)
                    if counter is not None:
                        counter.add_written(len(pending))
                    pending.clear()
            if pending:
                out.write(pending)
                if counter is not None:
                    counter.add_written(len(pending))
    except OSError as e:
        raise OutputWriteError(f"Failed writing merge output {output}: {e}") from e
    finally:
        for reader in readers:
            reader.close()
    return written


def merge_fan_in(memory_budget: int, buffer_bytes: int) -> int:
    """Runs merged at once: one read buffer per run within M, at least 2."""
    return max(2, memory_budget // max(RECORD_SIZE, buffer_bytes))


def merge_all(
    runs: list[Run],
    output: Path,
    memory_budget: int,
    run_dir: Path,
    buffer_bytes: int = DEFAULT_MERGE_BUFFER,
    counter: IoCounter | None = None,
) -> int:
    """
    Merge runs into ``output``, in several passes when they exceed the fan-in.

    Returns:
        Number of merge passes.
    """
    fan_in = merge_fan_in(memory_budget, buffer_bytes)
    passes = 1
    while len(runs) > fan_in:
        merged = []
        for group_index, start in enumerate(range(0, len(runs), fan_in)):
            group = runs[start : start + fan_in]
            if len(group) == 1:
                merged.append(group[0])
                continue
            path = run_dir / f"run_{passes}_{group_index:06d}"
            count = merge_runs(group, path, buffer_bytes, counter)
            merged.append(Run(path=path, record_count=count))
            for run in group:
                run.path.unlink(missing_ok=True)
        logger.info("Merge pass %d: %d runs -> %d runs", passes, len(runs), len(merged))
        runs = merged
        passes += 1

    merge_runs(runs, output, buffer_bytes, counter)
    for run in runs:
        run.path.unlink(missing_ok=True)
    return passes


class ExternalMergeSorter:
    """Run creation followed by a k-way merge, with the same report as the learned sorter."""

    def __init__(self, run_config: RunConfig):
        self.config = run_config
        self.recorder = PhaseRecorder(MERGESORT_PHASES)

    def sort(self) -> RunReport:
        cfg = self.config
        started = time.monotonic()
        input = open_input(cfg.input)
        workers = cfg.merge_workers or cfg.readers
        report = RunReport(
            algorithm="mergesort",
            input=str(cfg.input),
            output=str(cfg.output),
            records=input.record_count,
            input_bytes=input.byte_length,
            readers=workers,
            sorters=1,
            memory_budget=cfg.memory_budget,
        )

        run_dir = make_run_dir(cfg.temp_dir)
        try:
            with self.recorder.measure("run_creation") as io:
                runs = create_runs(input, cfg.memory_budget, workers, run_dir, io)
            with self.recorder.measure("merge") as io:
                passes = merge_all(
                    runs, cfg.output, cfg.memory_budget, run_dir, cfg.merge_buffer_bytes, io
                )
        finally:
            shutil.rmtree(run_dir, ignore_errors=True)

        logger.info("Merged %d runs in %d pass(es)", len(runs), passes)
        report.partitions = PartitionStats.from_sizes([run.record_count for run in runs])
        report.peak_resident_bytes = run_capacity(cfg.memory_budget, workers) * RECORD_SIZE * min(
            workers, max(1, len(runs))
        )
        report.phases = dict(self.recorder.phases)
        report.wall_seconds = time.monotonic() - started
        return report

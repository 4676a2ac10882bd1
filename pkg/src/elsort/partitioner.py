"""Parallel batched reading and model-driven scatter into fragment files.

Reader ``i`` owns row ``i`` of the fragment matrix: its staging buffers,
its fragment files ``frag_<i>_<j>``, its counters and its quarantine file.
Rows never share mutable state, so readers run without locks; counters are
merged once after all readers finish.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .cdf_model import CdfModel, radix_partition_many
from .encoding import encode_records
from .exceptions import FragmentWriteError, InvariantViolationError
from .instrumentation import IoCounter
from .records import RECORD_SIZE, RecordFile, as_records, printable_mask
from .validators import validate_positive

logger = logging.getLogger(__name__)

DEFAULT_WATERMARK = 64 * 1024
DEFAULT_DESCRIPTOR_BUDGET = 512


@dataclass(frozen=True)
class ReadAssignment:
    """Contiguous record range read by one worker."""

    worker: int
    start: int
    quota: int

    @property
    def offset(self) -> int:
        """Byte offset of the first record."""
        return self.start * RECORD_SIZE


def plan_reads(input: RecordFile, r: int) -> list[ReadAssignment]:
    """
    Split the input into ``r`` record-aligned ranges.

    Each worker gets ``n // r`` records and the last one absorbs the
    remainder. With fewer records than workers, ``r`` drops to ``n``.
    """
    validate_positive(r, "Reader count (r)")
    n = input.record_count
    effective = max(1, min(r, n))
    base = n // effective
    assignments = []
    for i in range(effective):
        quota = base if i < effective - 1 else n - base * (effective - 1)
        assignments.append(ReadAssignment(worker=i, start=i * base, quota=quota))
    return assignments


class FragmentRow:
    """Everything one reader worker writes."""

    def __init__(self, matrix: "FragmentMatrix", worker: int) -> None:
        self.matrix = matrix
        self.worker = worker
        self.counts = np.zeros(matrix.f, dtype=np.int64)
        self.radix_counts = np.zeros(matrix.f, dtype=np.int64)
        self.quarantined = 0
        self.io = IoCounter()
        self.staged: dict[int, bytearray] = {}
        self.pending: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self.created: set[int] = set()
        self._handles: dict[int, BinaryIO] = {}
        self._quarantine: BinaryIO | None = None

    def _write(self, j: int, data: bytes | bytearray) -> None:
        path = self.matrix.fragment_path(self.worker, j)
        try:
            handle = self._handles.get(j)
            if handle is None:
                handle = open(path, "ab")
                if self.matrix.keep_open:
                    self._handles[j] = handle
            handle.write(data)
            if self.matrix.keep_open:
                handle.flush()
            else:
                handle.close()
        except OSError as e:
            raise FragmentWriteError(f"Failed writing fragment {path}: {e}") from e
        self.created.add(j)
        self.io.add_written(len(data))

    def quarantine(self, records: np.ndarray) -> None:
        """Set aside records whose keys are not printable."""
        if self._quarantine is None:
            self._quarantine = open(self.matrix.quarantine_path(self.worker), "ab")
        self._quarantine.write(np.ascontiguousarray(records).tobytes())
        self.quarantined += records.shape[0]

    def close(self) -> None:
        for handle in self._handles.values():
            handle.close()
        self._handles.clear()
        if self._quarantine is not None:
            self._quarantine.close()
            self._quarantine = None


class FragmentMatrix:
    """r x f grid of fragment buffers and fragment files, plus counters."""

    def __init__(
        self,
        directory: Path,
        r: int,
        f: int,
        watermark: int = DEFAULT_WATERMARK,
        descriptor_budget: int = DEFAULT_DESCRIPTOR_BUDGET,
        track_radix: bool = True,
    ) -> None:
        self.directory = Path(directory)
        self.r = r
        self.f = f
        self.watermark = watermark
        self.keep_open = r * f <= descriptor_budget
        self.track_radix = track_radix
        self.rows = [FragmentRow(self, i) for i in range(r)]

    def fragment_path(self, worker: int, partition: int) -> Path:
        return self.directory / f"frag_{worker}_{partition}"

    def quarantine_path(self, worker: int) -> Path:
        return self.directory / f"quarantine_{worker}"

    def quarantine_files(self) -> list[Path]:
        return [self.quarantine_path(row.worker) for row in self.rows if row.quarantined]

    def partition_sizes(self) -> np.ndarray:
        """S: per-partition record counts merged across workers."""
        return np.sum([row.counts for row in self.rows], axis=0).astype(np.int64)

    def radix_sizes(self) -> np.ndarray:
        return np.sum([row.radix_counts for row in self.rows], axis=0).astype(np.int64)

    @property
    def quarantined(self) -> int:
        return sum(row.quarantined for row in self.rows)

    def io(self) -> IoCounter:
        total = IoCounter()
        for row in self.rows:
            total.merge(row.io)
        return total

    def close(self) -> None:
        for row in self.rows:
            row.close()

    def cleanup(self) -> None:
        """Close handles and delete every fragment file still on disk."""
        self.close()
        for row in self.rows:
            for j in row.created:
                self.fragment_path(row.worker, j).unlink(missing_ok=True)
            row.created.clear()


def scatter_batch(batch: np.ndarray, model: CdfModel, worker: int, fragments: FragmentMatrix) -> None:
    """
    Assign each record of a batch to its predicted partition.

    Records stay in the batch; row ``worker`` keeps the batch plus a
    partition-ordered index until :func:`flush_fragments` materializes them.
    Non-printable keys are quarantined and counted.
    """
    row = fragments.rows[worker]
    if batch.shape[0] == 0:
        return

    valid = printable_mask(batch)
    if not valid.all():
        rejected = int((~valid).sum())
        logger.warning("Worker %d quarantined %d record(s) with non-printable keys", worker, rejected)
        row.quarantine(batch[~valid])
        batch = batch[valid]
        if batch.shape[0] == 0:
            return

    encoded = encode_records(batch)
    parts = model.partition_many(encoded, fragments.f)
    order = np.argsort(parts, kind="stable")
    row.counts += np.bincount(parts, minlength=fragments.f)
    if fragments.track_radix:
        row.radix_counts += np.bincount(
            radix_partition_many(encoded, fragments.f), minlength=fragments.f
        )
    row.pending.append((batch, parts[order], order))


def flush_fragments(worker: int, fragments: FragmentMatrix, final: bool = False) -> None:
    """
    Append buffered records of row ``worker`` to its fragment files.

    Fragments are written once their staged bytes reach the watermark;
    ``final`` drains everything. Within a fragment, records keep arrival order.
    """
    row = fragments.rows[worker]
    for batch, sorted_parts, order in row.pending:
        grouped = batch[order]
        bounds = np.flatnonzero(np.diff(sorted_parts)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [len(sorted_parts)]))
        for start, end in zip(starts, ends):
            j = int(sorted_parts[start])
            staged = row.staged.get(j)
            if staged is None:
                staged = row.staged[j] = bytearray()
            staged += grouped[start:end].tobytes()
    row.pending.clear()

    for j in list(row.staged):
        staged = row.staged[j]
        if final or len(staged) >= fragments.watermark:
            row._write(j, staged)
            del row.staged[j]

    if final:
        row.close()


def _read_and_scatter(
    input: RecordFile,
    model: CdfModel,
    fragments: FragmentMatrix,
    assignment: ReadAssignment,
    batch_records: int,
) -> None:
    row = fragments.rows[assignment.worker]
    batches = input.iter_batches(
        batch_records, start=assignment.start, count=assignment.quota, counter=row.io
    )
    for batch in batches:
        scatter_batch(batch, model, assignment.worker, fragments)
        flush_fragments(assignment.worker, fragments)
    flush_fragments(assignment.worker, fragments, final=True)


def run_partition_phase(
    input: RecordFile,
    model: CdfModel,
    fragments: FragmentMatrix,
    assignments: list[ReadAssignment],
    batch_records: int,
) -> np.ndarray:
    """
    Read the input with one thread per assignment and scatter it into fragments.

    Returns:
        S, the merged per-partition record counts.
    """
    with ThreadPoolExecutor(max_workers=len(assignments), thread_name_prefix="reader") as pool:
        futures = [
            pool.submit(_read_and_scatter, input, model, fragments, a, batch_records)
            for a in assignments
        ]
        for future in futures:
            future.result()

    sizes = fragments.partition_sizes()
    logger.info(
        "Partitioned %d records into %d partitions (%d non-empty, %d quarantined)",
        int(sizes.sum()),
        fragments.f,
        int(np.count_nonzero(sizes)),
        fragments.quarantined,
    )
    return sizes


def scan_fragment_bounds(fragments: FragmentMatrix) -> list[tuple[int, int] | None]:
    """Min and max encoded key of every partition, read back from the fragment files."""
    bounds: list[tuple[int, int] | None] = []
    for j in range(fragments.f):
        low: int | None = None
        high: int | None = None
        for row in fragments.rows:
            path = fragments.fragment_path(row.worker, j)
            if j not in row.created or not path.exists():
                continue
            encoded = encode_records(as_records(path.read_bytes()))
            if encoded.size:
                low = int(encoded.min()) if low is None else min(low, int(encoded.min()))
                high = int(encoded.max()) if high is None else max(high, int(encoded.max()))
        bounds.append(None if low is None else (low, high))
    return bounds


def check_partition_order(bounds: list[tuple[int, int] | None]) -> None:
    """
    Verify that every partition's max key is <= the next non-empty partition's min key.

    Raises:
        InvariantViolationError: On the first adjacent pair out of order.
    """
    previous: tuple[int, tuple[int, int]] | None = None
    for j, bound in enumerate(bounds):
        if bound is None:
            continue
        if previous is not None and previous[1][1] > bound[0]:
            raise InvariantViolationError(
                f"partition {previous[0]} max key {previous[1][1]} exceeds "
                f"partition {j} min key {bound[0]}"
            )
        previous = (j, bound)

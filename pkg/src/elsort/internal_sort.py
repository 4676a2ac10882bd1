"""In-memory sort of one partition: model-predicted placement plus touch-up.

Records are first placed by counting sort on a slot predicted from the CDF
model, rescaled to the partition's own slice of [0, 1]. A slot takes at most
``SLOT_CAPACITY`` records, ordered within the slot by their full 10-byte keys;
the overflow is sorted by comparison and merged in. A final insertion-sort
pass over the full keys is linear when the placement is already in order.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .cdf_model import CdfModel
from .encoding import encode_records
from .exceptions import PartitionOverflowError
from .records import RECORD_SIZE, key_strings

logger = logging.getLogger(__name__)

SLOT_CAPACITY = 4


@dataclass
class SortStats:
    """Counters from one learned sort."""

    records: int = 0
    spilled: int = 0
    comparisons: int = 0
    shifts: int = 0
    mean_displacement: float = 0.0


@dataclass
class SortBuffer:
    """Records of one partition with their encoded keys."""

    records: np.ndarray
    encoded: np.ndarray | None = None
    capacity: int | None = None
    spill: np.ndarray = field(default_factory=lambda: np.empty((0, RECORD_SIZE), dtype=np.uint8))
    stats: SortStats = field(default_factory=SortStats)

    def __post_init__(self) -> None:
        if self.encoded is None:
            self.encoded = encode_records(self.records)
        if self.capacity is not None and len(self) > self.capacity:
            raise PartitionOverflowError(
                f"sort buffer holds {len(self)} records but its capacity is {self.capacity}"
            )

    def __len__(self) -> int:
        return self.records.shape[0]

    @property
    def nbytes(self) -> int:
        return len(self) * RECORD_SIZE

    def is_sorted(self) -> bool:
        keys = key_strings(self.records)
        return bool((keys[:-1] <= keys[1:]).all())


def _insertion_order(keys: list[bytes], stats: SortStats) -> np.ndarray:
    """Stable insertion sort of ``keys`` in place; returns the applied permutation."""
    n = len(keys)
    order = list(range(n))
    start = 1
    if n > 1:
        descents = np.flatnonzero(np.array(keys[1:]) < np.array(keys[:-1]))
        if not descents.size:
            stats.comparisons += n - 1
            return np.arange(n)
        start = int(descents[0]) + 1
        stats.comparisons += start - 1

    for i in range(start, n):
        key = keys[i]
        index = order[i]
        j = i - 1
        while j >= 0 and keys[j] > key:
            keys[j + 1] = keys[j]
            order[j + 1] = order[j]
            j -= 1
            stats.comparisons += 1
            stats.shifts += 1
        if j >= 0:
            stats.comparisons += 1
        keys[j + 1] = key
        order[j + 1] = index
    return np.array(order, dtype=np.int64)


def touch_up(records: np.ndarray, stats: SortStats | None = None) -> np.ndarray:
    """
    Insertion sort on the full 10-byte keys.

    Linear for nearly sorted input, quadratic in the worst case. Equal keys
    keep their input order.

    Args:
        records: (n, 100) record array.
        stats: Optional counters for comparisons and shifts.

    Returns:
        A sorted copy of ``records``.
    """
    stats = stats if stats is not None else SortStats()
    order = _insertion_order(key_strings(records).tolist(), stats)
    return records[order]


def learned_sort(buffer: SortBuffer, model: CdfModel, j: int, f: int) -> SortBuffer:
    """
    Sort the records of partition ``j`` of ``f``.

    Raises:
        PartitionOverflowError: If the buffer exceeds its capacity.
    """
    n = len(buffer)
    if buffer.capacity is not None and n > buffer.capacity:
        raise PartitionOverflowError(
            f"partition {j} holds {n} records but the buffer capacity is {buffer.capacity}"
        )
    stats = SortStats(records=n)
    if n < 2:
        return SortBuffer(buffer.records.copy(), buffer.encoded.copy(), buffer.capacity, stats=stats)

    # pass 1: histogram of predicted slots
    predicted = model.predict_many(buffer.encoded)
    slots = np.floor((predicted - j / f) * f * n)
    slots = np.clip(slots, 0, n - 1).astype(np.int64)
    counts = np.bincount(slots, minlength=n)

    # pass 2: prefix sums give each slot's first position; scatter in arrival order
    starts = np.cumsum(counts) - counts
    placement = np.argsort(slots, kind="stable")
    rank = np.arange(n) - starts[slots[placement]]
    kept = placement[rank < SLOT_CAPACITY]
    spilled = placement[rank >= SLOT_CAPACITY]
    stats.spilled = len(spilled)

    # slots are monotone in the key, so ordering each slot sorts all kept records
    kept = kept[np.lexsort((key_strings(buffer.records[kept]), slots[kept]))]

    order = kept
    if spilled.size:
        spilled = spilled[np.argsort(key_strings(buffer.records[spilled]), kind="stable")]
        positions = np.searchsorted(
            key_strings(buffer.records[kept]),
            key_strings(buffer.records[spilled]),
            side="right",
        )
        order = np.insert(kept, positions, spilled)

    placed = buffer.records[order]
    refined = _insertion_order(key_strings(placed).tolist(), stats)
    final = order[refined]
    stats.mean_displacement = float(np.abs(refined - np.arange(n)).mean())

    logger.debug(
        "Partition %d: %d records, %d spilled, %d shifts, mean displacement %.2f",
        j,
        n,
        stats.spilled,
        stats.shifts,
        stats.mean_displacement,
    )
    return SortBuffer(
        records=buffer.records[final],
        encoded=buffer.encoded[final],
        capacity=buffer.capacity,
        spill=buffer.records[spilled],
        stats=stats,
    )

"""Per-phase timing, I/O accounting and run reports."""

import csv
import json
import math
import threading
import time
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from pydantic import BaseModel, Field

ELSAR_PHASES = ("train", "partition", "gather", "sort", "coalesce", "flush")
MERGESORT_PHASES = ("run_creation", "merge")


class IoCounter:
    """Bytes read and written by one worker (or one phase)."""

    def __init__(self) -> None:
        self.bytes_read = 0
        self.bytes_written = 0

    def add_read(self, nbytes: int) -> None:
        self.bytes_read += nbytes

    def add_written(self, nbytes: int) -> None:
        self.bytes_written += nbytes

    def merge(self, other: "IoCounter") -> None:
        self.bytes_read += other.bytes_read
        self.bytes_written += other.bytes_written


class PhaseStats(BaseModel):
    """Time and I/O attributed to one phase."""

    seconds: float = 0.0
    bytes_read: int = 0
    bytes_written: int = 0


class PartitionStats(BaseModel):
    """Summary of partition (or run) sizes in records."""

    count: int = 0
    mean: float = 0.0
    stddev: float = 0.0
    max: int = 0

    @property
    def stddev_over_mean(self) -> float:
        return self.stddev / self.mean if self.mean else 0.0

    @classmethod
    def from_sizes(cls, sizes: list[int]) -> "PartitionStats":
        """Population statistics of a size vector."""
        if not sizes:
            return cls()
        mean = sum(sizes) / len(sizes)
        variance = sum((s - mean) ** 2 for s in sizes) / len(sizes)
        return cls(count=len(sizes), mean=mean, stddev=math.sqrt(variance), max=max(sizes))


class PhaseRecorder:
    """Accumulates phase statistics; safe to update from worker threads."""

    def __init__(self, phases: tuple[str, ...]) -> None:
        self._lock = threading.Lock()
        self.phases: dict[str, PhaseStats] = {name: PhaseStats() for name in phases}

    def add(self, phase: str, seconds: float = 0.0, counter: IoCounter | None = None) -> None:
        with self._lock:
            stats = self.phases.setdefault(phase, PhaseStats())
            stats.seconds += seconds
            if counter is not None:
                stats.bytes_read += counter.bytes_read
                stats.bytes_written += counter.bytes_written

    @contextmanager
    def measure(self, phase: str) -> Iterator[IoCounter]:
        """Time a block with the monotonic clock and collect its I/O."""
        counter = IoCounter()
        start = time.monotonic()
        try:
            yield counter
        finally:
            self.add(phase, time.monotonic() - start, counter)


class RunReport(BaseModel):
    """Outcome of one sort run."""

    algorithm: str
    input: str
    output: str
    records: int
    input_bytes: int
    wall_seconds: float = 0.0
    phases: dict[str, PhaseStats] = Field(default_factory=dict)
    partitions: PartitionStats = Field(default_factory=PartitionStats)
    radix_partitions: PartitionStats | None = None
    quarantined: int = 0
    quarantine_file: str | None = None
    readers: int = 0
    sorters: int = 0
    memory_budget: int = 0
    peak_resident_bytes: int = 0
    input_checksum: int | None = None
    output_checksum: int | None = None
    quarantine_checksum: int = 0
    sorted: bool | None = None

    @property
    def bytes_read(self) -> int:
        return sum(p.bytes_read for p in self.phases.values())

    @property
    def bytes_written(self) -> int:
        return sum(p.bytes_written for p in self.phases.values())

    @property
    def io_load(self) -> int:
        """Total bytes read plus written across all phases."""
        return self.bytes_read + self.bytes_written

    @property
    def records_per_second(self) -> float:
        return self.records / self.wall_seconds if self.wall_seconds else 0.0

    @property
    def bytes_per_second(self) -> float:
        return self.input_bytes / self.wall_seconds if self.wall_seconds else 0.0

    @property
    def verified(self) -> bool:
        """Output sorted and, with any quarantined records, a permutation of the input."""
        if self.input_checksum is None or self.output_checksum is None:
            return False
        accounted = (self.output_checksum + self.quarantine_checksum) & ((1 << 64) - 1)
        return bool(self.sorted) and self.input_checksum == accounted

    def to_dict(self) -> dict:
        """JSON-serializable dictionary including derived figures."""
        data = self.model_dump()
        data["partitions"]["stddev_over_mean"] = self.partitions.stddev_over_mean
        if self.radix_partitions is not None:
            data["radix_partitions"]["stddev_over_mean"] = self.radix_partitions.stddev_over_mean
        data.update(
            bytes_read=self.bytes_read,
            bytes_written=self.bytes_written,
            io_load=self.io_load,
            records_per_second=self.records_per_second,
            bytes_per_second=self.bytes_per_second,
            verified=self.verified,
        )
        return data

    def write_json(self, path: Path) -> None:
        """Write the report as JSON."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    def to_csv_row(self) -> dict[str, str]:
        """Flat row: totals, then seconds per phase."""
        row = {
            "algorithm": self.algorithm,
            "records": str(self.records),
            "seconds": f"{self.wall_seconds:.6f}",
            "bytes_read": str(self.bytes_read),
            "bytes_written": str(self.bytes_written),
            "io_load": str(self.io_load),
            "part_stddev_over_mean": f"{self.partitions.stddev_over_mean:.6f}",
            "peak_resident_bytes": str(self.peak_resident_bytes),
        }
        for name, stats in self.phases.items():
            row[f"{name}_seconds"] = f"{stats.seconds:.6f}"
        return row

    def write_csv(self, path: Path) -> None:
        """Write the report as a one-row CSV file."""
        row = self.to_csv_row()
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)

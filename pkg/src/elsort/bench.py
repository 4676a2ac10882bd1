"""Sort dispatch and the benchmark sweep (sizes x skew x algorithm)."""

import csv
import json
import logging
import shutil
from collections.abc import Callable
from pathlib import Path

from pydantic import BaseModel

from .config import Config, RunConfig, get_config
from .datagen import generate
from .exceptions import StorageError
from .instrumentation import RunReport
from .mergesort import ExternalMergeSorter
from .sorter import ElsarSorter, make_run_dir, verify_output

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "algorithm",
    "records",
    "skew",
    "seconds",
    "bytes_read",
    "bytes_written",
    "part_stddev_over_mean",
)


def run_sort(run_config: RunConfig, verify: bool = True, dump_model: Path | None = None) -> RunReport:
    """
    Sort with the configured algorithm and optionally verify the output.

    Verification reads both files again; that I/O is not part of the report's
    phase accounting.
    """
    if run_config.algorithm == "mergesort":
        report = ExternalMergeSorter(run_config).sort()
    else:
        report = ElsarSorter(run_config, dump_model=dump_model).sort()
    if verify:
        verify_output(report, run_config.input, run_config.output)
    return report


class BenchRow(BaseModel):
    """One benchmark run."""

    algorithm: str
    records: int
    skew: bool
    seconds: float
    bytes_read: int
    bytes_written: int
    part_stddev_over_mean: float
    radix_stddev_over_mean: float | None = None
    input_checksum: int | None = None
    output_checksum: int | None = None
    sorted: bool | None = None
    verified: bool | None = None

    @classmethod
    def from_report(cls, report: RunReport, skew: bool, compare_radix: bool = False) -> "BenchRow":
        radix = None
        if compare_radix and report.radix_partitions is not None:
            radix = report.radix_partitions.stddev_over_mean
        return cls(
            algorithm=report.algorithm,
            records=report.records,
            skew=skew,
            seconds=report.wall_seconds,
            bytes_read=report.bytes_read,
            bytes_written=report.bytes_written,
            part_stddev_over_mean=report.partitions.stddev_over_mean,
            radix_stddev_over_mean=radix,
            input_checksum=report.input_checksum,
            output_checksum=report.output_checksum,
            sorted=report.sorted,
            verified=report.verified,
        )

    def to_csv_row(self) -> dict[str, str]:
        """Convert to CSV row format."""
        return {
            "algorithm": self.algorithm,
            "records": str(self.records),
            "skew": "true" if self.skew else "false",
            "seconds": f"{self.seconds:.6f}",
            "bytes_read": str(self.bytes_read),
            "bytes_written": str(self.bytes_written),
            "part_stddev_over_mean": f"{self.part_stddev_over_mean:.6f}",
        }

    def to_json_dict(self) -> dict:
        """Convert to JSON-serializable dictionary."""
        data = self.model_dump()
        if data["radix_stddev_over_mean"] is None:
            del data["radix_stddev_over_mean"]
        return data


def write_csv(rows: list[BenchRow], path: Path) -> None:
    """Write rows with the fixed column order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.to_csv_row())


def write_json(rows: list[BenchRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"runs": [row.to_json_dict() for row in rows]}, f, indent=2)


class BenchRunner:
    """Generates inputs and sorts each with every algorithm."""

    def __init__(self, config: Config | None = None):
        self.config = config or get_config()

    def sweep(
        self,
        sizes: list[int],
        skews: list[bool],
        algorithms: list[str],
        seed: int = 0,
        compare_radix: bool = False,
        on_row: Callable[[BenchRow], None] | None = None,
        **overrides,
    ) -> list[BenchRow]:
        """
        Run the cartesian product of sizes, skew modes and algorithms.

        Args:
            sizes: Record counts.
            skews: Skew modes to generate.
            algorithms: "elsar" and/or "mergesort".
            seed: Generator and sampling seed.
            compare_radix: Keep the radix partition balance in the rows.
            on_row: Called with each row as it completes.
            **overrides: RunConfig fields applied to every run.

        Returns:
            One row per run, in sweep order.
        """
        rows = []
        work_dir = make_run_dir(self.config.temp_dir)
        try:
            for size in sizes:
                for skew in skews:
                    input_path = work_dir / f"input_{size}_{'skew' if skew else 'uniform'}"
                    generate(size, seed, skew, input_path, self.config.app.generator.workers)
                    for algorithm in algorithms:
                        output_path = work_dir / f"output_{algorithm}"
                        run_config = self.config.build_run_config(
                            input_path,
                            output_path,
                            algorithm=algorithm,
                            seed=seed,
                            temp_dir=work_dir / "tmp",
                            **overrides,
                        )
                        report = run_sort(run_config, verify=True)
                        if not report.verified:
                            logger.error(
                                "%s produced an invalid output for %d records (skew=%s)",
                                algorithm,
                                size,
                                skew,
                            )
                        row = BenchRow.from_report(report, skew, compare_radix)
                        rows.append(row)
                        if on_row is not None:
                            on_row(row)
                        output_path.unlink(missing_ok=True)
                    input_path.unlink(missing_ok=True)
        except OSError as e:
            raise StorageError(f"Benchmark I/O failed: {e}") from e
        finally:
            shutil.rmtree(work_dir, ignore_errors=True)
        return rows

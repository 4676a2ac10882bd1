"""Partition-and-concatenate external sort driven by a learned CDF model."""

import logging
import os
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .cdf_model import CdfModel, PartitionPlan, draw_sample, train
from .config import RunConfig, logical_cpus
from .datagen import validate
from .exceptions import InvariantViolationError, StorageError
from .instrumentation import ELSAR_PHASES, IoCounter, PartitionStats, PhaseRecorder, RunReport
from .internal_sort import learned_sort
from .partitioner import (
    FragmentMatrix,
    check_partition_order,
    plan_reads,
    run_partition_phase,
    scan_fragment_bounds,
)
from .records import RECORD_SIZE, RecordFile, file_checksum
from .writer import (
    MemoryBudget,
    PartitionCounter,
    compute_wave,
    create_sparse_output,
    gather_partition,
    write_partition,
)

logger = logging.getLogger(__name__)


def open_input(path: Path) -> RecordFile:
    """Open the input file, mapping a missing file to a storage error."""
    try:
        return RecordFile.open(path)
    except FileNotFoundError as e:
        raise StorageError(f"Input file not found: {path}") from e


def make_run_dir(temp_dir: Path) -> Path:
    """Private working directory for one run under ``temp_dir``."""
    try:
        temp_dir.mkdir(parents=True, exist_ok=True)
        return Path(tempfile.mkdtemp(dir=temp_dir, prefix="elsort-"))
    except OSError as e:
        raise StorageError(f"Cannot create a working directory in {temp_dir}: {e}") from e


def verify_output(report: RunReport, input: Path, output: Path) -> RunReport:
    """Fill the checksum and sorted fields of ``report`` by re-reading both files."""
    report.input_checksum = file_checksum(input)
    result = validate(output)
    report.output_checksum = result.checksum
    report.sorted = result.sorted
    if report.quarantine_file:
        report.quarantine_checksum = file_checksum(report.quarantine_file)
    if not report.verified:
        logger.error(
            "Verification failed: sorted=%s input checksum %016x output checksum %016x",
            result.sorted,
            report.input_checksum,
            report.output_checksum,
        )
    return report


class ElsarSorter:
    """Samples, trains, partitions, then sorts and writes partitions in waves."""

    def __init__(self, run_config: RunConfig, dump_model: Path | None = None):
        self.config = run_config
        self.dump_model = dump_model
        self.recorder = PhaseRecorder(ELSAR_PHASES)
        self.model: CdfModel | None = None

    def sort(self) -> RunReport:
        """
        Sort ``config.input`` into ``config.output``.

        Returns:
            The run report.

        Raises:
            ElsortError: On any failure; the working directory is removed.
        """
        cfg = self.config
        started = time.monotonic()
        input = open_input(cfg.input)
        n = input.record_count
        create_sparse_output(cfg.output, input.byte_length)

        report = RunReport(
            algorithm="elsar",
            input=str(cfg.input),
            output=str(cfg.output),
            records=n,
            input_bytes=input.byte_length,
            memory_budget=cfg.memory_budget,
        )

        if n < 2:
            shutil.copyfile(input.path, cfg.output)
            report.phases = dict(self.recorder.phases)
            report.wall_seconds = time.monotonic() - started
            return report

        run_dir = make_run_dir(cfg.temp_dir)
        try:
            self._run(input, run_dir, report)
        finally:
            shutil.rmtree(run_dir, ignore_errors=True)

        report.phases = dict(self.recorder.phases)
        report.wall_seconds = time.monotonic() - started
        logger.info(
            "Sorted %d records in %.2fs (%.1f MB/s)",
            n,
            report.wall_seconds,
            report.bytes_per_second / 1e6,
        )
        return report

    def _train(self, input: RecordFile) -> CdfModel:
        cfg = self.config
        population = min(cfg.batch_records, input.record_count)
        if cfg.sampling == "whole-file":
            population = input.record_count
        rate = max(cfg.sample_rate, min(1.0, 2 / population))
        if rate != cfg.sample_rate:
            logger.info("Raised sample rate to %.4f to draw at least two keys", rate)

        with self.recorder.measure("train") as io:
            sample = draw_sample(
                input,
                rate=rate,
                cap=cfg.sample_cap,
                seed=cfg.seed,
                batch_records=cfg.batch_records,
                mode=cfg.sampling,
                counter=io,
            )
            if len(sample) < 2:
                # non-printable keys were filtered out of the sample
                sample = draw_sample(
                    input,
                    rate=1.0,
                    cap=cfg.sample_cap,
                    seed=cfg.seed,
                    batch_records=cfg.batch_records,
                    mode="first-batch",
                    counter=io,
                )
            if len(sample) < 2:
                logger.warning(
                    "Only %d printable sample key(s); using a constant model", len(sample)
                )
                model = CdfModel.constant()
            else:
                model = train(sample, leaves=cfg.leaves, root=cfg.root)

        logger.info("Trained model on %d sample keys (%d leaves)", len(sample), model.leaf_count)
        if self.dump_model is not None:
            model.dump(self.dump_model)
            logger.info("Wrote model dump to %s", self.dump_model)
        return model

    def _partition(self, input: RecordFile, model: CdfModel, run_dir: Path) -> FragmentMatrix:
        cfg = self.config
        assignments = plan_reads(input, cfg.readers)
        fragments = FragmentMatrix(
            run_dir,
            len(assignments),
            cfg.partitions,
            watermark=cfg.fragment_watermark,
            descriptor_budget=cfg.descriptor_budget,
        )
        try:
            with self.recorder.measure("partition") as io:
                run_partition_phase(input, model, fragments, assignments, cfg.batch_records)
                io.merge(fragments.io())
        except BaseException:
            fragments.cleanup()
            raise
        return fragments

    def _keep_quarantine(self, fragments: FragmentMatrix, report: RunReport) -> None:
        """Collect quarantined records next to the output and shrink the output to fit."""
        report.quarantined = fragments.quarantined
        if not report.quarantined:
            return
        target = Path(f"{self.config.output}.quarantine")
        with open(target, "wb") as out:
            for path in fragments.quarantine_files():
                with open(path, "rb") as f:
                    shutil.copyfileobj(f, out)
        os.truncate(self.config.output, (report.records - report.quarantined) * RECORD_SIZE)
        report.quarantine_file = str(target)
        logger.warning("%d records quarantined to %s", report.quarantined, target)

    def _run(self, input: RecordFile, run_dir: Path, report: RunReport) -> None:
        cfg = self.config
        model = self.model = self._train(input)
        fragments = self._partition(input, model, run_dir)

        try:
            self._keep_quarantine(fragments, report)
            sizes = fragments.partition_sizes()
            plan = PartitionPlan(f=cfg.partitions, r=fragments.r, sizes=sizes)
            plan.check_tiling(report.records - report.quarantined)
            if cfg.debug_checks:
                check_partition_order(scan_fragment_bounds(fragments))
                logger.info("Fragment order check passed for %d partitions", cfg.partitions)

            workers = cfg.max_sorters or logical_cpus()
            wave = compute_wave(sizes, cfg.memory_budget, workers)
            logger.info("Sorting %d partitions with %d concurrent sorters", wave.partitions, wave.s)

            budget = MemoryBudget(cfg.memory_budget)
            self._sort_partitions(model, fragments, plan, wave.s, budget)

            report.readers = fragments.r
            report.sorters = wave.s
            report.peak_resident_bytes = budget.peak
            report.partitions = PartitionStats.from_sizes(sizes.tolist())
            report.radix_partitions = PartitionStats.from_sizes(fragments.radix_sizes().tolist())
        finally:
            fragments.cleanup()

    def _sort_partitions(
        self,
        model: CdfModel,
        fragments: FragmentMatrix,
        plan: PartitionPlan,
        sorters: int,
        budget: MemoryBudget,
    ) -> None:
        cfg = self.config
        partitions = PartitionCounter(plan.f)

        def sorter() -> None:
            fd = os.open(cfg.output, os.O_WRONLY)
            try:
                while (j := partitions.next()) is not None:
                    size = int(plan.sizes[j])
                    if size == 0:
                        continue
                    nbytes = size * RECORD_SIZE
                    budget.acquire(nbytes)
                    try:
                        self._sort_one(j, model, fragments, plan, fd)
                    finally:
                        budget.release(nbytes)
            finally:
                os.close(fd)

        with ThreadPoolExecutor(max_workers=sorters, thread_name_prefix="sorter") as pool:
            futures = [pool.submit(sorter) for _ in range(sorters)]
            for future in futures:
                future.result()

    def _sort_one(
        self,
        j: int,
        model: CdfModel,
        fragments: FragmentMatrix,
        plan: PartitionPlan,
        fd: int,
    ) -> None:
        cfg = self.config
        gather_io = IoCounter()
        start = time.monotonic()
        buffer = gather_partition(j, fragments, gather_io)
        self.recorder.add("gather", time.monotonic() - start, gather_io)
        if len(buffer) != int(plan.sizes[j]):
            raise InvariantViolationError(
                f"partition {j} gathered {len(buffer)} records, expected {int(plan.sizes[j])}"
            )

        start = time.monotonic()
        ordered = learned_sort(buffer, model, j, cfg.partitions)
        self.recorder.add("sort", time.monotonic() - start)
        del buffer

        write_io = IoCounter()
        start = time.monotonic()
        flush_seconds = write_partition(j, ordered, plan, fd, cfg.coalesce_bytes, write_io)
        elapsed = time.monotonic() - start
        self.recorder.add("coalesce", elapsed - flush_seconds)
        self.recorder.add("flush", flush_seconds, write_io)


"""Click CLI commands for elsort."""

import json
import sys
from pathlib import Path
from typing import NoReturn

import click
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__
from .bench import BenchRow, BenchRunner, run_sort, write_csv, write_json
from .config import get_config
from .datagen import generate, validate
from .exceptions import ElsortError, StorageError
from .instrumentation import RunReport
from .log import setup_logging
from .validators import parse_count, parse_int_list, validate_algorithm

console = Console()

SKEW_CHOICES = {"uniform": [False], "skewed": [True], "both": [False, True]}


def get_project_root() -> Path:
    """Get project root directory."""
    return Path.cwd()


def _fail(error: Exception) -> NoReturn:
    """Print a diagnostic and exit with the error's code (3 for raw OS errors)."""
    if isinstance(error, ElsortError):
        code = error.exit_code
    else:
        code = StorageError.exit_code
    console.print(f"[red]Error: {error}[/red]")
    sys.exit(code)


def _format_bytes(n: float) -> str:
    for unit in ("B", "KiB", "MiB", "GiB"):
        if abs(n) < 1024:
            return f"{n:.0f} {unit}" if unit == "B" else f"{n:.1f} {unit}"
        n /= 1024
    return f"{n:.1f} TiB"


@click.group()
@click.version_option(version=__version__, prog_name="elsort")
@click.option("-v", "--verbose", is_flag=True, help="Log debug detail.")
@click.pass_context
def cli(ctx, verbose):
    """elsort - external sorting of 100-byte records with a learned CDF model."""
    ctx.ensure_object(dict)
    root = get_project_root()
    ctx.obj["root"] = root
    try:
        config = get_config(root)
    except ElsortError as e:
        _fail(e)
    setup_logging(config.app.logging, level="DEBUG" if verbose else config.log_level, log_dir=root)


@cli.command()
@click.option("--force", is_flag=True, help="Overwrite an existing config/config.yaml.")
@click.pass_context
def init(ctx, force):
    """Initialize project directories and the default configuration."""
    root = ctx.obj["root"]
    config = get_config(root)

    console.print("\n[bold]Initializing elsort...[/bold]\n")

    for dir_name in ("config", config.app.paths.reports):
        dir_path = root / dir_name
        dir_path.mkdir(parents=True, exist_ok=True)
        console.print(f"  [green]✓[/green] Created {dir_name}/")

    existed = config.config_path.exists()
    config.write_default(overwrite=force)
    if existed and not force:
        console.print("  [yellow]~[/yellow] config/config.yaml already exists")
    else:
        console.print("  [green]✓[/green] Wrote config/config.yaml")
        config.reload()


def _print_report(report: RunReport) -> None:
    phase_table = Table(title=f"Phases ({report.algorithm})", box=None)
    phase_table.add_column("Phase", style="cyan")
    phase_table.add_column("Seconds", justify="right")
    phase_table.add_column("Read", justify="right")
    phase_table.add_column("Written", justify="right")
    for name, stats in report.phases.items():
        phase_table.add_row(
            name,
            f"{stats.seconds:.3f}",
            _format_bytes(stats.bytes_read),
            _format_bytes(stats.bytes_written),
        )
    console.print(phase_table)
    console.print()

    summary = Table(title="Run Summary", box=None)
    summary.add_column("Metric", style="cyan")
    summary.add_column("Value", justify="right")
    summary.add_row("Records", f"{report.records:,}")
    summary.add_row("Wall time", f"{report.wall_seconds:.3f}s")
    summary.add_row("Throughput", f"{report.bytes_per_second / 1e6:.1f} MB/s")
    ratio = report.io_load / report.input_bytes if report.input_bytes else 0.0
    summary.add_row("I/O load", f"{_format_bytes(report.io_load)} ({ratio:.2f}x input)")
    summary.add_row(
        "Partition stddev/mean",
        f"{report.partitions.stddev_over_mean:.4f} ({report.partitions.count} parts)",
    )
    if report.radix_partitions is not None:
        summary.add_row("Radix stddev/mean", f"{report.radix_partitions.stddev_over_mean:.4f}")
    summary.add_row("Peak resident", _format_bytes(report.peak_resident_bytes))
    if report.quarantined:
        summary.add_row("Quarantined", f"[yellow]{report.quarantined}[/yellow]")
    if report.sorted is not None:
        verdict = "[green]yes[/green]" if report.verified else "[red]no[/red]"
        summary.add_row("Verified", verdict)
        summary.add_row("Output checksum", f"{report.output_checksum:016x}")
    console.print(summary)


@cli.command("sort")
@click.argument("input", type=click.Path(dir_okay=False, path_type=Path))
@click.argument("output", type=click.Path(dir_okay=False, path_type=Path))
@click.option("-a", "--algorithm", type=click.Choice(["elsar", "mergesort"]), default="elsar", help="Sorting algorithm.")
@click.option("-f", "--partitions", type=int, default=None, help="Partition count f.")
@click.option("-r", "--readers", type=int, default=None, help="Reader threads r.")
@click.option("-M", "--memory", "memory_budget", default=None, help="Memory budget (e.g. 2GiB).")
@click.option("-B", "--batch-records", type=int, default=None, help="Records per read batch.")
@click.option("--temp-dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Directory for fragments and runs.")
@click.option("--seed", type=int, default=None, help="Sampling seed.")
@click.option("--sample-rate", type=float, default=None, help="Fraction of the sampled range used for training.")
@click.option("--sample-cap", type=int, default=None, help="Maximum sample size.")
@click.option("--sampling", type=click.Choice(["first-batch", "whole-file"]), default=None, help="Where the sample comes from.")
@click.option("-L", "--leaves", type=int, default=None, help="Leaf models in the CDF model.")
@click.option("--root", type=click.Choice(["quantile", "linear"]), default=None, help="Root model kind.")
@click.option("--coalesce", "coalesce_bytes", default=None, help="Coalesce buffer size.")
@click.option("--fragment-watermark", default=None, help="Staged bytes before a fragment is flushed.")
@click.option("--descriptor-budget", type=int, default=None, help="Fragment files kept open at once.")
@click.option("--max-sorters", type=int, default=None, help="Upper bound on concurrent sorters.")
@click.option("--merge-buffer", "merge_buffer_bytes", default=None, help="Read buffer per run (mergesort).")
@click.option("--debug-checks/--no-debug-checks", default=None, help="Scan fragments for order violations.")
@click.option("--dump-model", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the trained model as text.")
@click.option("--verify/--no-verify", default=True, help="Validate the output after sorting.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the report (.json or .csv).")
@click.pass_context
def sort_cmd(ctx, input, output, dump_model, verify, report_path, **overrides):
    """Sort INPUT into OUTPUT."""
    config = get_config(ctx.obj["root"])

    try:
        run_config = config.build_run_config(input, output, **overrides)

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console,
            transient=True,
        ) as progress:
            progress.add_task(f"Sorting {input.name} ({run_config.algorithm})...", total=None)
            report = run_sort(run_config, verify=verify, dump_model=dump_model)

        console.print()
        _print_report(report)

        if report_path is not None:
            if report_path.suffix.lower() == ".csv":
                report.write_csv(report_path)
            else:
                report.write_json(report_path)
            console.print(f"\nReport written to {report_path}")

    except (ElsortError, OSError) as e:
        _fail(e)

    if verify and not report.verified:
        console.print("[red]Output failed verification.[/red]")
        sys.exit(1)


@cli.command()
@click.argument("count")
@click.argument("output", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, help="64-bit generator seed.")
@click.option("--skew/--uniform", default=False, help="Skewed keys from the 128-entry prefix table.")
@click.option("-w", "--workers", type=int, default=None, help="Generator threads.")
@click.pass_context
def gen(ctx, count, output, seed, skew, workers):
    """Generate COUNT records into OUTPUT."""
    config = get_config(ctx.obj["root"])
    settings = config.app.generator

    try:
        n = parse_count(count)
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console,
            transient=True,
        ) as progress:
            progress.add_task(f"Generating {n:,} records...", total=None)
            generate(n, seed, skew, output, workers or settings.workers, settings.chunk_records)
    except (ElsortError, OSError) as e:
        _fail(e)

    mode = "skewed" if skew else "uniform"
    console.print(f"[green]✓[/green] Generated {n:,} {mode} records in {output}")


@cli.command("validate")
@click.argument("file", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--json", "as_json", is_flag=True, help="Print the result as JSON.")
def validate_cmd(file, as_json):
    """Check that FILE is sorted and print its checksum."""
    try:
        result = validate(file)
    except FileNotFoundError:
        _fail(StorageError(f"File not found: {file}"))
    except (ElsortError, OSError) as e:
        _fail(e)

    if as_json:
        click.echo(json.dumps(result.model_dump(), indent=2))
    else:
        table = Table(title=f"Validation of {file.name}", box=None)
        table.add_column("Metric", style="cyan")
        table.add_column("Value", justify="right")
        table.add_row("Records", f"{result.record_count:,}")
        table.add_row("Sorted", "[green]yes[/green]" if result.sorted else "[red]no[/red]")
        if result.first_violation_index is not None:
            table.add_row("First violation", str(result.first_violation_index))
        table.add_row("Duplicate keys", str(result.duplicate_keys))
        table.add_row("Checksum", f"{result.checksum:016x}")
        console.print(table)

    if not result.sorted:
        sys.exit(1)


@cli.command()
@click.option("--sizes", default=None, help="Comma-separated record counts (e.g. 1e5,1e6).")
@click.option("--skew", "skew_mode", type=click.Choice(list(SKEW_CHOICES)), default=None, help="Key distributions to run.")
@click.option("--algorithms", default=None, help="Comma-separated algorithms.")
@click.option("--seed", type=int, default=None, help="Generator and sampling seed.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="CSV output (default reports/bench.csv).")
@click.option("--json", "json_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="JSON output with checksums.")
@click.option("--compare-radix", is_flag=True, help="Record radix partition balance in the JSON rows.")
@click.option("-f", "--partitions", type=int, default=None, help="Partition count f.")
@click.option("-r", "--readers", type=int, default=None, help="Reader threads r.")
@click.option("-M", "--memory", "memory_budget", default=None, help="Memory budget.")
@click.pass_context
def bench(ctx, sizes, skew_mode, algorithms, seed, csv_path, json_path, compare_radix, **overrides):
    """Run a sizes x skew x algorithm sweep and write a CSV row per run."""
    config = get_config(ctx.obj["root"])
    settings = config.app.bench

    try:
        size_list = parse_int_list(sizes) if sizes else settings.sizes
        skews = SKEW_CHOICES[skew_mode] if skew_mode else settings.skews
        algorithm_list = (
            [validate_algorithm(a) for a in algorithms.split(",") if a.strip()]
            if algorithms
            else list(settings.algorithms)
        )
        seed = settings.seed if seed is None else seed
        csv_path = csv_path or config.reports_path / "bench.csv"
        total = len(size_list) * len(skews) * len(algorithm_list)

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TextColumn("{task.completed}/{task.total}"),
            console=console,
        ) as progress:
            task = progress.add_task("Benchmarking...", total=total)

            def on_row(row: BenchRow) -> None:
                progress.update(
                    task,
                    advance=1,
                    description=f"{row.algorithm} {row.records:,} {'skewed' if row.skew else 'uniform'}",
                )

            rows = BenchRunner(config).sweep(
                size_list,
                skews,
                algorithm_list,
                seed=seed,
                compare_radix=compare_radix,
                on_row=on_row,
                **overrides,
            )

        write_csv(rows, csv_path)
        if json_path is not None:
            write_json(rows, json_path)
    except (ElsortError, OSError) as e:
        _fail(e)

    table = Table(title="Benchmark", box=None)
    table.add_column("Algorithm", style="cyan")
    table.add_column("Records", justify="right")
    table.add_column("Skew")
    table.add_column("Seconds", justify="right")
    table.add_column("I/O", justify="right")
    table.add_column("Part stddev/mean", justify="right")
    for row in rows:
        table.add_row(
            row.algorithm,
            f"{row.records:,}",
            "skewed" if row.skew else "uniform",
            f"{row.seconds:.3f}",
            _format_bytes(row.bytes_read + row.bytes_written),
            f"{row.part_stddev_over_mean:.4f}",
        )
    console.print(table)
    console.print(f"\nCSV written to {csv_path}")

    if not all(row.verified for row in rows):
        console.print("[red]At least one run failed verification.[/red]")
        sys.exit(1)


def main():
    """Main entry point."""
    cli(obj={})


if __name__ == "__main__":
    main()

"""Configuration management using Pydantic settings."""

import tempfile
from pathlib import Path
from typing import Any, Literal

import psutil
import pydantic
import yaml
from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationError
from .validators import (
    parse_byte_size,
    validate_distinct_paths,
    validate_fraction,
    validate_positive,
)

CONFIG_RELATIVE_PATH = Path("config") / "config.yaml"


def get_project_root() -> Path:
    """Get the project root directory."""
    return Path.cwd()


def logical_cpus() -> int:
    """Number of logical CPUs, at least 1."""
    return psutil.cpu_count(logical=True) or 1


def default_memory_budget() -> int:
    """Half of the physical memory, in bytes."""
    return psutil.virtual_memory().total // 2


class SortSettings(BaseModel):
    """Partition-and-concatenate sorter settings."""

    partitions: int = 1000
    readers: int | None = None
    memory_budget: int | None = None
    batch_records: int = 10_486
    sample_rate: float = 0.01
    sample_cap: int = 10_000_000
    sampling: Literal["first-batch", "whole-file"] = "whole-file"
    leaves: int = 1000
    root: Literal["quantile", "linear"] = "quantile"
    coalesce_bytes: int = 100 * 1024
    fragment_watermark: int = 64 * 1024
    descriptor_budget: int = 512
    max_sorters: int | None = None
    seed: int = 0
    debug_checks: bool = False

    @field_validator("memory_budget", "coalesce_bytes", "fragment_watermark", mode="before")
    @classmethod
    def _parse_sizes(cls, value: Any) -> Any:
        if value is None:
            return None
        return parse_byte_size(value)


class MergeSortSettings(BaseModel):
    """External mergesort baseline settings."""

    workers: int | None = None
    merge_buffer_bytes: int = 1024 * 1024

    @field_validator("merge_buffer_bytes", mode="before")
    @classmethod
    def _parse_sizes(cls, value: Any) -> Any:
        return parse_byte_size(value)


class GeneratorSettings(BaseModel):
    """Record generator settings."""

    workers: int = 1
    chunk_records: int = 100_000


class BenchSettings(BaseModel):
    """Benchmark sweep settings."""

    sizes: list[int] = Field(default_factory=lambda: [100_000, 1_000_000, 10_000_000])
    skews: list[bool] = Field(default_factory=lambda: [False, True])
    algorithms: list[Literal["elsar", "mergesort"]] = Field(
        default_factory=lambda: ["elsar", "mergesort"]
    )
    seed: int = 0


class PathSettings(BaseModel):
    """File path settings."""

    temp_dir: str | None = None
    reports: str = "reports"


class LoggingSettings(BaseModel):
    """Logging settings."""

    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: str | None = None


class AppConfig(BaseModel):
    """Application configuration from YAML."""

    sort: SortSettings = Field(default_factory=SortSettings)
    mergesort: MergeSortSettings = Field(default_factory=MergeSortSettings)
    generator: GeneratorSettings = Field(default_factory=GeneratorSettings)
    bench: BenchSettings = Field(default_factory=BenchSettings)
    paths: PathSettings = Field(default_factory=PathSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)


class EnvSettings(BaseSettings):
    """Environment variable settings."""

    model_config = SettingsConfigDict(
        env_prefix="ELSORT_",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    temp_dir: str | None = None
    log_level: str | None = None


class RunConfig(BaseModel):
    """Fully resolved configuration of one sort run."""

    input: Path
    output: Path
    algorithm: Literal["elsar", "mergesort"] = "elsar"
    partitions: int = 1000
    readers: int = 1
    memory_budget: int
    batch_records: int = 10_486
    temp_dir: Path
    seed: int = 0
    sample_rate: float = 0.01
    sample_cap: int = 10_000_000
    sampling: Literal["first-batch", "whole-file"] = "whole-file"
    leaves: int = 1000
    root: Literal["quantile", "linear"] = "quantile"
    coalesce_bytes: int = 100 * 1024
    fragment_watermark: int = 64 * 1024
    descriptor_budget: int = 512
    max_sorters: int | None = None
    merge_buffer_bytes: int = 1024 * 1024
    merge_workers: int | None = None
    debug_checks: bool = False

    @model_validator(mode="after")
    def _check_ranges(self) -> "RunConfig":
        validate_positive(self.partitions, "Partition count (f)")
        validate_positive(self.readers, "Reader count (r)")
        validate_positive(self.batch_records, "Batch size (B)")
        validate_positive(self.leaves, "Leaf count (L)")
        validate_positive(self.sample_cap, "Sample cap")
        validate_positive(self.coalesce_bytes, "Coalesce buffer")
        validate_positive(self.descriptor_budget, "Descriptor budget")
        validate_fraction(self.sample_rate)
        if self.max_sorters is not None:
            validate_positive(self.max_sorters, "Max sorters")
        if self.merge_workers is not None:
            validate_positive(self.merge_workers, "Merge workers")
        if self.memory_budget < 100:
            raise ConfigurationError(
                f"Memory budget must hold at least one record (got {self.memory_budget} bytes)"
            )
        validate_distinct_paths(input=self.input, output=self.output, temp_dir=self.temp_dir)
        return self


class Config:
    """Main configuration class combining YAML and environment settings."""

    _instance: "Config | None" = None
    _project_root: Path | None = None

    def __init__(self, project_root: Path | None = None):
        self._project_root = project_root or get_project_root()
        self._load_config()

    def _load_config(self) -> None:
        """Load configuration from YAML and environment."""
        config_path = self.config_path

        if config_path.exists():
            try:
                with open(config_path) as f:
                    yaml_config = yaml.safe_load(f) or {}
                self.app = AppConfig(**yaml_config)
            except (yaml.YAMLError, pydantic.ValidationError, TypeError) as e:
                raise ConfigurationError(f"Invalid configuration in {config_path}: {e}")
        else:
            self.app = AppConfig()

        env_file = self._project_root / ".env"
        if env_file.exists():
            self.env = EnvSettings(_env_file=str(env_file))
        else:
            self.env = EnvSettings()

    @property
    def project_root(self) -> Path:
        """Get project root path."""
        return self._project_root

    @property
    def config_path(self) -> Path:
        """Get YAML config file path."""
        return self._project_root / CONFIG_RELATIVE_PATH

    @property
    def temp_dir(self) -> Path:
        """Temporary directory, with ELSORT_TEMP_DIR taking precedence."""
        configured = self.env.temp_dir or self.app.paths.temp_dir
        if configured:
            return Path(configured).expanduser()
        return Path(tempfile.gettempdir())

    @property
    def reports_path(self) -> Path:
        """Get reports directory path."""
        return self._project_root / self.app.paths.reports

    @property
    def log_level(self) -> str:
        """Effective log level."""
        return (self.env.log_level or self.app.logging.level).upper()

    def build_run_config(self, input: Path, output: Path, **overrides: Any) -> RunConfig:
        """
        Resolve a RunConfig from the YAML settings plus explicit overrides.

        Args:
            input: Input record file.
            output: Output record file.
            **overrides: RunConfig fields given on the command line; None values
                fall back to the configuration file.

        Returns:
            Validated RunConfig.

        Raises:
            ConfigurationError: If the resulting configuration is invalid.
        """
        sort = self.app.sort
        values: dict[str, Any] = {
            "input": input,
            "output": output,
            "partitions": sort.partitions,
            "readers": sort.readers or logical_cpus(),
            "memory_budget": sort.memory_budget or default_memory_budget(),
            "batch_records": sort.batch_records,
            "temp_dir": self.temp_dir,
            "seed": sort.seed,
            "sample_rate": sort.sample_rate,
            "sample_cap": sort.sample_cap,
            "sampling": sort.sampling,
            "leaves": sort.leaves,
            "root": sort.root,
            "coalesce_bytes": sort.coalesce_bytes,
            "fragment_watermark": sort.fragment_watermark,
            "descriptor_budget": sort.descriptor_budget,
            "max_sorters": sort.max_sorters,
            "merge_buffer_bytes": self.app.mergesort.merge_buffer_bytes,
            "merge_workers": self.app.mergesort.workers,
            "debug_checks": sort.debug_checks,
        }
        for key, value in overrides.items():
            if value is not None:
                values[key] = value

        for key in ("memory_budget", "coalesce_bytes", "fragment_watermark", "merge_buffer_bytes"):
            values[key] = parse_byte_size(values[key])

        try:
            return RunConfig(**values)
        except pydantic.ValidationError as e:
            raise ConfigurationError(f"Invalid run configuration: {e}")

    def write_default(self, overwrite: bool = False) -> Path:
        """Write the default configuration to config/config.yaml."""
        config_path = self.config_path
        if config_path.exists() and not overwrite:
            return config_path

        config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(config_path, "w") as f:
            yaml.dump(AppConfig().model_dump(), f, default_flow_style=False, sort_keys=False)
        return config_path

    def reload(self) -> None:
        """Reload configuration from files."""
        self._load_config()

    @classmethod
    def get_instance(cls, project_root: Path | None = None) -> "Config":
        """Get or create singleton instance."""
        if cls._instance is None or (
            project_root is not None and cls._instance._project_root != project_root
        ):
            cls._instance = cls(project_root)
        return cls._instance

    @classmethod
    def reset_instance(cls) -> None:
        """Reset singleton instance (useful for testing)."""
        cls._instance = None


def get_config(project_root: Path | None = None) -> Config:
    """Get configuration instance."""
    return Config.get_instance(project_root)

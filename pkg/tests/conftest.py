"""Shared fixtures for the elsort test suite."""

from pathlib import Path

import numpy as np
import pytest

from elsort.config import Config, RunConfig
from elsort.datagen import generate, make_records
from elsort.records import KEY_SIZE, PAYLOAD_SIZE, RECORD_SIZE, RecordFile, write_records


@pytest.fixture(autouse=True)
def _isolated_config(monkeypatch):
    """Fresh config singleton and no ELSORT_* variables for every test."""
    monkeypatch.delenv("ELSORT_TEMP_DIR", raising=False)
    monkeypatch.delenv("ELSORT_LOG_LEVEL", raising=False)
    Config.reset_instance()
    yield
    Config.reset_instance()


@pytest.fixture
def project(tmp_path, monkeypatch) -> Path:
    """Run inside an empty project directory."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def record_file(tmp_path):
    """Factory writing generated records to ``tmp_path``."""

    def _make(count: int, seed: int = 1, skew: bool = False, name: str | None = None) -> RecordFile:
        path = tmp_path / (name or f"input_{count}_{seed}_{'skew' if skew else 'uniform'}.bin")
        return generate(count, seed, skew, path)

    return _make


@pytest.fixture
def run_config(tmp_path):
    """Factory for small RunConfigs rooted in ``tmp_path``."""

    def _make(input: Path, output: Path | None = None, **overrides) -> RunConfig:
        values = {
            "input": input,
            "output": output or tmp_path / "sorted.bin",
            "partitions": 16,
            "readers": 3,
            "memory_budget": 64 * 1024 * 1024,
            "batch_records": 1000,
            "temp_dir": tmp_path / "work",
            "sample_rate": 0.1,
            "leaves": 64,
            "max_sorters": 3,
        }
        values.update(overrides)
        return RunConfig(**values)

    return _make


def records_from_keys(keys: list[bytes], payload_seed: int = 0) -> np.ndarray:
    """Records with the given keys and distinct generated payloads."""
    records = make_records(0, len(keys), payload_seed)
    for i, key in enumerate(keys):
        assert len(key) == KEY_SIZE
        records[i, :KEY_SIZE] = np.frombuffer(key, dtype=np.uint8)
    return records


def key_list(records: np.ndarray) -> list[bytes]:
    return [bytes(r[:KEY_SIZE]) for r in records]


def write_keys(path: Path, keys: list[bytes]) -> RecordFile:
    return write_records(path, records_from_keys(keys))


def blank_records(count: int) -> np.ndarray:
    """Records with space keys and 'x' payloads."""
    records = np.full((count, RECORD_SIZE), ord("x"), dtype=np.uint8)
    records[:, :KEY_SIZE] = ord(" ")
    assert records.shape[1] == KEY_SIZE + PAYLOAD_SIZE
    return records


def constant_model(value: float):
    """A one-leaf model predicting ``value`` for every key."""
    from elsort.cdf_model import CdfModel

    return CdfModel.constant(value)


def sorted_records(records: np.ndarray) -> np.ndarray:
    from elsort.records import key_strings

    return records[np.argsort(key_strings(records), kind="stable")]

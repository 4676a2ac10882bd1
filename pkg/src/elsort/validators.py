"""Input validation utilities."""

import re
from pathlib import Path
from typing import Literal

from .exceptions import ValidationError

_SIZE_UNITS = {
    "": 1,
    "b": 1,
    "k": 1000,
    "kb": 1000,
    "kib": 1024,
    "m": 1000**2,
    "mb": 1000**2,
    "mib": 1024**2,
    "g": 1000**3,
    "gb": 1000**3,
    "gib": 1024**3,
    "t": 1000**4,
    "tb": 1000**4,
    "tib": 1024**4,
}

_SIZE_PATTERN = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([a-zA-Z]*)\s*$")


def parse_byte_size(value: str | int) -> int:
    """
    Parse a byte size such as "64KiB", "2GiB", "500MB" or "4096".

    Args:
        value: Size string or integer.

    Returns:
        Size in bytes.

    Raises:
        ValidationError: If the size cannot be parsed or is negative.
    """
    if isinstance(value, bool):
        raise ValidationError(f"Invalid byte size '{value}'")
    if isinstance(value, int):
        if value < 0:
            raise ValidationError(f"Byte size cannot be negative: {value}")
        return value

    match = _SIZE_PATTERN.match(str(value))
    if not match:
        raise ValidationError(f"Invalid byte size '{value}'. Expected e.g. 4096, 64KiB, 2GiB")

    number, unit = match.groups()
    multiplier = _SIZE_UNITS.get(unit.lower())
    if multiplier is None:
        raise ValidationError(
            f"Unknown size unit '{unit}'. Must be one of: "
            f"{', '.join(u for u in sorted(_SIZE_UNITS) if u)}"
        )
    return int(float(number) * multiplier)


def validate_positive(value: int, field_name: str) -> int:
    """
    Validate a strictly positive integer.

    Raises:
        ValidationError: If value < 1.
    """
    if value < 1:
        raise ValidationError(f"{field_name} must be at least 1 (got {value})")
    return value


def validate_fraction(value: float, field_name: str = "Sample rate") -> float:
    """
    Validate a fraction in (0, 1].

    Args:
        value: Fraction to validate.
        field_name: Field name for error messages.

    Returns:
        The validated fraction.

    Raises:
        ValidationError: If value is outside (0, 1].
    """
    if not 0 < value <= 1:
        raise ValidationError(f"{field_name} must be in (0, 1] (got {value})")
    return value


def validate_algorithm(name: str) -> Literal["elsar", "mergesort"]:
    """
    Validate a sorting algorithm name.

    Raises:
        ValidationError: If the algorithm is unknown.
    """
    valid = {"elsar", "mergesort"}
    name_lower = name.lower().strip()
    if name_lower not in valid:
        raise ValidationError(
            f"Invalid algorithm '{name}'. Must be one of: {', '.join(sorted(valid))}"
        )
    return name_lower


def validate_distinct_paths(**paths: Path | None) -> None:
    """
    Validate that the given paths point at different locations.

    Args:
        **paths: Named paths; None entries are ignored.

    Raises:
        ValidationError: If two paths resolve to the same location.
    """
    seen: dict[Path, str] = {}
    for name, path in paths.items():
        if path is None:
            continue
        resolved = Path(path).expanduser().resolve()
        if resolved in seen:
            raise ValidationError(
                f"{name} and {seen[resolved]} must be distinct paths (both are {resolved})"
            )
        seen[resolved] = name


def parse_int_list(value: str, field_name: str = "Sizes") -> list[int]:
    """
    Parse a comma-separated list of integers (e.g. "100000,1e6").

    Raises:
        ValidationError: If any entry is not a non-negative integer.
    """
    result = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            number = float(part)
        except ValueError:
            raise ValidationError(f"Invalid entry '{part}' in {field_name.lower()}")
        if number < 0 or number != int(number):
            raise ValidationError(f"{field_name} must be non-negative integers (got '{part}')")
        result.append(int(number))
    if not result:
        raise ValidationError(f"{field_name} cannot be empty")
    return result


def parse_count(value: str, field_name: str = "Record count") -> int:
    """
    Parse a single non-negative count, accepting forms like "1e6".

    Raises:
        ValidationError: If the value is not exactly one non-negative integer.
    """
    counts = parse_int_list(value, field_name)
    if len(counts) != 1:
        raise ValidationError(f"{field_name} must be a single number (got '{value}')")
    return counts[0]

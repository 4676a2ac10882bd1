"""Base-95 numerical embedding of printable-ASCII keys.

Each character contributes ``(byte - 32) * 95**(l - i)``; at most the first
nine characters contribute, so the largest value is ``95**9 - 1`` and always
fits an unsigned 64-bit integer (it is even below ``2**63``). Positions past
the end of a short key contribute 0.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyInputError, NonPrintableKeyError, ValidationError
from .records import PRINTABLE_MAX, PRINTABLE_MIN

BASE = 95
MAX_ENCODED_CHARS = 9
POWERS = tuple(BASE**p for p in range(MAX_ENCODED_CHARS))
KEY_SPACE = BASE**MAX_ENCODED_CHARS
MAX_ENCODED = KEY_SPACE - 1

# weights for the fixed-width fast path: byte i (0-based) gets 95**(8 - i)
_FIXED_WEIGHTS = np.array(POWERS[::-1], dtype=np.uint64)


@dataclass(frozen=True)
class EncodedKey:
    """A key projected onto [0, 95**9)."""

    value: int
    effective_length: int


def encode(key: bytes, l: int) -> EncodedKey:
    """
    Encode the first min(l, 9) characters of ``key`` as a base-95 number.

    Args:
        key: Key bytes.
        l: Key length used by the positional weights.

    Returns:
        The encoded key.

    Raises:
        NonPrintableKeyError: If a contributing byte is outside 32..126.
        ValidationError: If l < 1.
    """
    if l < 1:
        raise ValidationError(f"effective length must be at least 1 (got {l})")
    width = min(l, MAX_ENCODED_CHARS)
    value = 0
    for i in range(width):
        if i < len(key):
            byte = key[i]
            if not PRINTABLE_MIN <= byte <= PRINTABLE_MAX:
                raise NonPrintableKeyError(
                    f"byte {byte} at position {i} of key {bytes(key)!r} is not printable"
                )
            value += (byte - PRINTABLE_MIN) * POWERS[width - 1 - i]
    return EncodedKey(value=value, effective_length=l)


def max_observed_length(keys: Sequence[bytes]) -> int:
    """
    Longest key length, used as ``l`` for variable-length keys.

    Raises:
        EmptyInputError: If ``keys`` is empty.
    """
    if not keys:
        raise EmptyInputError("cannot take the maximum length of an empty key sequence")
    return max(len(k) for k in keys)


def encode_records(records: np.ndarray) -> np.ndarray:
    """
    Encode the keys of an (n, 100) record array (fixed 10-byte keys, l = 9).

    Callers must have filtered out non-printable keys; see
    :func:`elsort.records.printable_mask`.
    """
    digits = records[:, :MAX_ENCODED_CHARS].astype(np.uint64) - np.uint64(PRINTABLE_MIN)
    return (digits * _FIXED_WEIGHTS).sum(axis=1, dtype=np.uint64)

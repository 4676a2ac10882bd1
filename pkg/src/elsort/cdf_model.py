"""Two-layer CDF model (recursive model index) over encoded keys.

The root routes an encoded key to one of ``L`` leaves; each leaf is a linear
model whose output is clamped to the leaf's slice of the empirical CDF. Leaf
slices are ordered and touch end to end, and every slope is non-negative, so
``predict`` is monotone over the whole key space: ``a <= b`` implies
``predict(a) <= predict(b)``. Partition indices derived from it inherit the
same order, which is what lets sorted partitions be concatenated.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .encoding import KEY_SPACE, EncodedKey, encode_records
from .exceptions import (
    DataFormatError,
    EmptyInputError,
    InsufficientSampleError,
    InvariantViolationError,
)
from .instrumentation import IoCounter
from .records import RECORD_SIZE, RecordFile, printable_mask
from .validators import validate_fraction, validate_positive

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 0.01
DEFAULT_SAMPLE_CAP = 10_000_000
DEFAULT_LEAVES = 1000
DEFAULT_BATCH_RECORDS = 10_486

RootKind = Literal["quantile", "linear"]
SamplingMode = Literal["first-batch", "whole-file"]


@dataclass(frozen=True)
class TrainingSample:
    """Sorted encoded keys drawn from the input."""

    encoded_keys: np.ndarray
    sample_rate: float
    cap: int
    population: int

    def __len__(self) -> int:
        return len(self.encoded_keys)


def sample_size(population: int, rate: float, cap: int) -> int:
    """min(cap, ceil(rate * population))."""
    return min(cap, population, math.ceil(round(rate * population, 9)))


def draw_sample(
    input: RecordFile,
    rate: float = DEFAULT_SAMPLE_RATE,
    cap: int = DEFAULT_SAMPLE_CAP,
    seed: int = 0,
    batch_records: int = DEFAULT_BATCH_RECORDS,
    mode: SamplingMode = "whole-file",
    counter: IoCounter | None = None,
) -> TrainingSample:
    """
    Draw a uniform random sample of keys, encoded and sorted.

    In "first-batch" mode the sample comes from the first batch the first
    reader would read; "whole-file" mode samples the entire input with
    positioned reads. Keys with non-printable bytes are left out.

    Raises:
        EmptyInputError: If the input has no records.
    """
    if input.record_count == 0:
        raise EmptyInputError(f"{input.path} contains no records")
    validate_fraction(rate)
    rng = np.random.default_rng(seed)

    if mode == "first-batch":
        batch = input.read(0, batch_records, counter)
        population = batch.shape[0]
        size = sample_size(population, rate, cap)
        picked = np.sort(rng.choice(population, size=size, replace=False))
        records = batch[picked]
    else:
        population = input.record_count
        size = sample_size(population, rate, cap)
        picked = np.sort(rng.choice(population, size=size, replace=False))
        records = input.read_at(picked, counter)

    records = records[printable_mask(records)]
    keys = np.sort(encode_records(records))
    logger.debug("Drew %d sample keys from %d records (%s)", len(keys), population, mode)
    return TrainingSample(encoded_keys=keys, sample_rate=rate, cap=cap, population=population)


def _least_squares(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope and intercept of the least-squares line, slope clamped at 0."""
    y_mean = float(y.mean())
    if len(x) < 2:
        return 0.0, y_mean
    x_mean = float(x.mean())
    dx = x - x_mean
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        return 0.0, y_mean
    slope = float(np.dot(dx, y - y_mean)) / sxx
    if not slope > 0.0:
        return 0.0, y_mean
    return slope, y_mean - slope * x_mean


@dataclass(frozen=True)
class CdfModel:
    """Trained, immutable CDF model; share one instance across workers."""

    leaf_count: int
    root_kind: RootKind
    root_slope: float
    root_intercept: float
    boundaries: np.ndarray
    anchors: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def route(self, keys: np.ndarray) -> np.ndarray:
        """Leaf index of each encoded key; boundary ties go to the lower leaf."""
        keys = np.asarray(keys, dtype=np.uint64)
        if self.root_kind == "quantile":
            return np.searchsorted(self.boundaries, keys, side="left").astype(np.int64)
        coordinate = self.leaf_count * (
            self.root_slope * (keys.astype(np.float64) / KEY_SPACE) + self.root_intercept
        )
        leaves = np.ceil(coordinate) - 1
        return np.clip(leaves, 0, self.leaf_count - 1).astype(np.int64)

    def predict_many(self, keys: np.ndarray) -> np.ndarray:
        """CDF estimate in [0, 1] for each encoded key."""
        keys = np.asarray(keys, dtype=np.uint64)
        leaves = self.route(keys)
        offsets = (keys.astype(np.int64) - self.anchors[leaves]).astype(np.float64)
        raw = self.intercepts[leaves] + self.slopes[leaves] * offsets
        return np.clip(raw, self.lo[leaves], self.hi[leaves])

    def partition_many(self, keys: np.ndarray, f: int) -> np.ndarray:
        """Partition index in [0, f) for each encoded key."""
        scaled = np.floor(self.predict_many(keys) * f).astype(np.int64)
        return np.minimum(scaled, f - 1)

    @classmethod
    def constant(cls, value: float = 0.0) -> "CdfModel":
        """One-leaf model predicting ``value`` for every key."""
        return cls(
            leaf_count=1,
            root_kind="linear",
            root_slope=0.0,
            root_intercept=0.0,
            boundaries=np.zeros(0, dtype=np.uint64),
            anchors=np.zeros(1, dtype=np.int64),
            slopes=np.zeros(1),
            intercepts=np.array([float(value)]),
            lo=np.zeros(1),
            hi=np.ones(1),
        )

    def dumps(self) -> str:
        """Text dump: a header line, then ``index lo hi anchor slope intercept`` per leaf."""
        lines = [
            f"# elsort-cdf-model leaves={self.leaf_count} root={self.root_kind} "
            f"root_slope={self.root_slope!r} root_intercept={self.root_intercept!r}"
        ]
        if self.root_kind == "quantile":
            lines.append("# boundaries " + " ".join(str(int(b)) for b in self.boundaries))
        for j in range(self.leaf_count):
            lines.append(
                f"{j} {float(self.lo[j])!r} {float(self.hi[j])!r} {int(self.anchors[j])} "
                f"{float(self.slopes[j])!r} {float(self.intercepts[j])!r}"
            )
        return "\n".join(lines) + "\n"

    def dump(self, path: Path) -> None:
        """Write :meth:`dumps` output to ``path``."""
        path.write_text(self.dumps(), encoding="ascii")

    @classmethod
    def loads(cls, text: str) -> "CdfModel":
        """Parse the format written by :meth:`dumps`."""
        lines = [line for line in text.splitlines() if line.strip()]
        try:
            header = dict(part.split("=", 1) for part in lines[0].split()[2:])
            leaf_count = int(header["leaves"])
            root_kind = header["root"]
            body = lines[1:]
            boundaries = np.zeros(0, dtype=np.uint64)
            if root_kind == "quantile":
                boundaries = np.array(
                    [int(b) for b in body[0].split()[2:]], dtype=np.uint64
                )
                body = body[1:]
            rows = [line.split() for line in body]
            return cls(
                leaf_count=leaf_count,
                root_kind=root_kind,
                root_slope=float(header["root_slope"]),
                root_intercept=float(header["root_intercept"]),
                boundaries=boundaries,
                anchors=np.array([int(r[3]) for r in rows], dtype=np.int64),
                slopes=np.array([float(r[4]) for r in rows]),
                intercepts=np.array([float(r[5]) for r in rows]),
                lo=np.array([float(r[1]) for r in rows]),
                hi=np.array([float(r[2]) for r in rows]),
            )
        except (IndexError, KeyError, ValueError) as e:
            raise DataFormatError(f"Malformed model dump: {e}")


def train(
    sample: TrainingSample,
    leaves: int = DEFAULT_LEAVES,
    root: RootKind = "quantile",
) -> CdfModel:
    """
    Fit a two-layer model to a sorted sample.

    Sample point ``i`` of ``n`` has empirical CDF ``i / (n - 1)``. The root
    routes points to leaves; leaf ``j`` is fitted by least squares on its
    points and clamped to ``[lo_j, hi_j]``, the empirical CDF at its first
    point and at the next leaf's first point. Empty leaves become constant
    at the midpoint of their (possibly zero-width) interval.

    Raises:
        InsufficientSampleError: If the sample holds fewer than two keys.
    """
    validate_positive(leaves, "Leaf count (L)")
    keys = np.asarray(sample.encoded_keys, dtype=np.uint64)
    n = len(keys)
    if n < 2:
        raise InsufficientSampleError(f"training needs at least 2 sample keys (got {n})")

    cdf = np.arange(n, dtype=np.float64) / (n - 1)

    root_slope, root_intercept = 0.0, 0.0
    boundaries = np.zeros(0, dtype=np.uint64)
    if root == "quantile":
        starts = (np.arange(1, leaves) * n) // leaves
        boundaries = keys[starts]
    else:
        root_slope, root_intercept = _least_squares(keys.astype(np.float64) / KEY_SPACE, cdf)

    partial = CdfModel(
        leaf_count=leaves,
        root_kind=root,
        root_slope=root_slope,
        root_intercept=root_intercept,
        boundaries=boundaries,
        anchors=np.zeros(leaves, dtype=np.int64),
        slopes=np.zeros(leaves),
        intercepts=np.zeros(leaves),
        lo=np.zeros(leaves),
        hi=np.ones(leaves),
    )
    routed = partial.route(keys)
    first = np.searchsorted(routed, np.arange(leaves + 1), side="left")

    lo = np.minimum(first[:leaves] / (n - 1), 1.0)
    hi = np.append(lo[1:], 1.0)
    anchors = np.zeros(leaves, dtype=np.int64)
    slopes = np.zeros(leaves)
    intercepts = (lo + hi) / 2

    signed = keys.astype(np.int64)
    for j in np.flatnonzero(first[1:] > first[:-1]):
        a, b = first[j], first[j + 1]
        anchors[j] = signed[a]
        offsets = (signed[a:b] - signed[a]).astype(np.float64)
        slopes[j], intercepts[j] = _least_squares(offsets, cdf[a:b])

    empty = first[1:] == first[:-1]
    anchors[empty] = signed[np.minimum(first[:-1][empty], n - 1)]

    logger.debug(
        "Trained %s-root model: %d leaves, %d empty, sample of %d",
        root,
        leaves,
        int(empty.sum()),
        n,
    )
    return CdfModel(
        leaf_count=leaves,
        root_kind=root,
        root_slope=root_slope,
        root_intercept=root_intercept,
        boundaries=boundaries,
        anchors=anchors,
        slopes=slopes,
        intercepts=intercepts,
        lo=lo,
        hi=hi,
    )


def _key_value(k: EncodedKey | int) -> int:
    return k.value if isinstance(k, EncodedKey) else int(k)


def predict(model: CdfModel, k: EncodedKey | int) -> float:
    """CDF estimate in [0, 1] of one encoded key."""
    return float(model.predict_many(np.array([_key_value(k)], dtype=np.uint64))[0])


def partition_of(model: CdfModel, k: EncodedKey | int, f: int) -> int:
    """min(floor(predict(k) * f), f - 1)."""
    return int(model.partition_many(np.array([_key_value(k)], dtype=np.uint64), f)[0])


def radix_partition_of(k: EncodedKey | int, f: int) -> int:
    """Equi-width partition: floor(k * f / 95**9), computed exactly."""
    return min(_key_value(k) * f // KEY_SPACE, f - 1)


def radix_partition_many(keys: np.ndarray, f: int) -> np.ndarray:
    """Vectorized equi-width partitioning (float64; bin edges may shift by rounding)."""
    scaled = np.floor(np.asarray(keys, dtype=np.uint64).astype(np.float64) * (f / KEY_SPACE))
    return np.clip(scaled, 0, f - 1).astype(np.int64)


@dataclass(frozen=True)
class PartitionPlan:
    """Final partition sizes and the output byte offsets derived from them."""

    f: int
    r: int
    sizes: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        """offsets[j] = 100 * sum(S[:j])."""
        counts = np.asarray(self.sizes, dtype=np.int64)
        return np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64) * RECORD_SIZE

    @property
    def total_records(self) -> int:
        return int(np.sum(self.sizes))

    def byte_range(self, j: int) -> tuple[int, int]:
        """Half-open output byte range of partition ``j``."""
        start = int(self.offsets[j])
        return start, start + int(self.sizes[j]) * RECORD_SIZE

    def check_tiling(self, total_records: int) -> None:
        """
        Verify the partition ranges are disjoint and tile the whole output.

        Raises:
            InvariantViolationError: If sizes are negative or do not add up.
        """
        sizes = np.asarray(self.sizes, dtype=np.int64)
        if len(sizes) != self.f:
            raise InvariantViolationError(f"plan has {len(sizes)} sizes for {self.f} partitions")
        if (sizes < 0).any():
            raise InvariantViolationError("plan contains a negative partition size")
        if int(sizes.sum()) != total_records:
            raise InvariantViolationError(
                f"partition sizes add up to {int(sizes.sum())} records, expected {total_records}"
            )
        ends = self.offsets + sizes * RECORD_SIZE
        if (ends[:-1] != self.offsets[1:]).any():
            raise InvariantViolationError("partition byte ranges do not tile the output")

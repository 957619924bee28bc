"""Shared domain types: species taxonomy, point records, segments, RNG contract.

Everything here is immutable after construction and safe to share between
parallel workers.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

# Canonical species ordering; codes 1..9 index into this tuple.
SPECIES_NAMES = (
    "pine",
    "spruce",
    "birch",
    "maple",
    "aspen",
    "rowan",
    "oak",
    "linden",
    "alder",
)
SPECIES_CODES = tuple(range(1, len(SPECIES_NAMES) + 1))
N_SPECIES = len(SPECIES_NAMES)

# Prediction sentinel for segments a classifier could not score.
MISSING_PREDICTION = 0


class UnknownSpeciesCode(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class SpeciesLabel:
    code: int
    name: str


_LABELS = {c: SpeciesLabel(c, n) for c, n in zip(SPECIES_CODES, SPECIES_NAMES)}
_CODES_BY_NAME = {n: c for c, n in zip(SPECIES_CODES, SPECIES_NAMES)}


def species_from_code(code: int) -> SpeciesLabel:
    """Map a numeric species code (1..9) to its label; raise on anything else."""
    try:
        return _LABELS[int(code)]
    except (KeyError, TypeError, ValueError):
        raise UnknownSpeciesCode(f"unknown species code: {code!r}") from None


def species_from_name(name: str) -> SpeciesLabel:
    try:
        return _LABELS[_CODES_BY_NAME[name]]
    except KeyError:
        raise UnknownSpeciesCode(f"unknown species name: {name!r}") from None


class ProfileCategory(enum.Enum):
    SINGLE_TREE = "SingleTree"
    LARGE_TREE_WITH_UNDERGROWTH = "LargeTreeWithUndergrowth"
    MANY_SAME_SPECIES = "ManySameSpecies"
    MANY_MANY_SPECIES = "ManyManySpecies"
    TREE_SECTION = "TreeSection"
    UNASSIGNED = "Unassigned"


class CrownClass(enum.Enum):
    ISOLATED = "Isolated"
    DOMINANT = "Dominant"
    CO_DOMINANT = "CoDominant"
    SMALLER_NEXT_TO_LARGER = "SmallerNextToLarger"
    ROADSIDE = "Roadside"
    UNASSIGNED = "Unassigned"


class Split(enum.Enum):
    TRAIN = "Train"
    TEST = "Test"
    UNASSIGNED = "Unassigned"


class InvariantViolation(ValueError):
    """A record violates a type invariant; carries a 1-based line number when parsed."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True, slots=True)
class PointRecord:
    """One laser return. `reflectance` carries either range-corrected intensity
    or calibrated reflectance in dB, depending on the sensor; NaN means absent."""

    x: float
    y: float
    z: float
    channel: int
    reflectance: float = float("nan")
    amplitude: float = float("nan")
    echo_deviation: float = float("nan")
    return_number: int = 1
    num_returns: int = 1

    def validate(self, line_no: Optional[int] = None) -> "PointRecord":
        if self.channel not in (1, 2, 3):
            raise InvariantViolation(f"channel must be 1..3, got {self.channel}", line_no)
        if not (1 <= self.return_number <= self.num_returns):
            raise InvariantViolation(
                f"return_number {self.return_number} outside 1..num_returns={self.num_returns}",
                line_no,
            )
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.z)):
            raise InvariantViolation("non-finite coordinates", line_no)
        return self


@dataclass(frozen=True, slots=True)
class FusedPoint:
    """PointRecord plus the per-channel reflectance triplet (NaN = NA sentinel)."""

    x: float
    y: float
    z: float
    channel: int
    reflectance: float
    amplitude: float
    echo_deviation: float
    return_number: int
    num_returns: int
    refl_c1: float
    refl_c2: float
    refl_c3: float


@dataclass(frozen=True)
class SegmentCloud:
    """All points of one tree segment, stored columnar, plus footprint geometry.

    `refl_by_channel[c-1][i]` is point i's fused reflectance for channel c
    (NaN where no donor was found within the fusion radius).
    """

    segment_id: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    channel: np.ndarray
    return_number: np.ndarray
    num_returns: np.ndarray
    refl_c1: np.ndarray
    refl_c2: np.ndarray
    refl_c3: np.ndarray
    footprint_area: float
    pixel_count: int = 0

    def __post_init__(self):
        if self.footprint_area <= 0:
            raise ValueError(f"segment {self.segment_id}: footprint_area must be > 0")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def height(self) -> float:
        """Maximum normalized height of the segment's points."""
        return float(self.z.max()) if len(self.z) else 0.0

    @property
    def refl_by_channel(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.refl_c1, self.refl_c2, self.refl_c3

    def channel_counts(self) -> np.ndarray:
        """Number of points per source channel, index 0..2 for channels 1..3."""
        return np.bincount(self.channel, minlength=4)[1:4]

    @property
    def point_density(self) -> float:
        return len(self.x) / self.footprint_area

    def points(self) -> list[FusedPoint]:
        """Materialize per-point records (API convenience; bulk ops use the arrays)."""
        return [
            FusedPoint(
                float(self.x[i]), float(self.y[i]), float(self.z[i]),
                int(self.channel[i]),
                float((self.refl_c1, self.refl_c2, self.refl_c3)[int(self.channel[i]) - 1][i]),
                float("nan"), float("nan"),
                int(self.return_number[i]), int(self.num_returns[i]),
                float(self.refl_c1[i]), float(self.refl_c2[i]), float(self.refl_c3[i]),
            )
            for i in range(len(self.x))
        ]

    def with_points(self, keep: np.ndarray) -> "SegmentCloud":
        """New cloud restricted to the selected point indices; geometry unchanged."""
        return replace(
            self,
            x=self.x[keep], y=self.y[keep], z=self.z[keep],
            channel=self.channel[keep],
            return_number=self.return_number[keep], num_returns=self.num_returns[keep],
            refl_c1=self.refl_c1[keep], refl_c2=self.refl_c2[keep], refl_c3=self.refl_c3[keep],
        )


@dataclass(frozen=True)
class LabeledSegment:
    cloud: SegmentCloud
    species: SpeciesLabel
    profile_category: ProfileCategory = ProfileCategory.UNASSIGNED
    crown_class: CrownClass = CrownClass.UNASSIGNED
    split: Split = Split.UNASSIGNED

    @property
    def segment_id(self) -> int:
        return self.cloud.segment_id


def rng_from(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic generator for (seed, substream); the single source of
    randomness for every randomized operation in the package."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(s) for s in stream)))

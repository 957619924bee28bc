"""Multispectral airborne laser scanning toolkit: individual tree segmentation
and species classification with training-set scaling analysis."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    MISSING_PREDICTION,
    SPECIES_CODES,
    SPECIES_NAMES,
    CrownClass,
    FusedPoint,
    InvariantViolation,
    LabeledSegment,
    PointRecord,
    ProfileCategory,
    SegmentCloud,
    Split,
    UnknownSpeciesCode,
    rng_from,
    species_from_code,
    species_from_name,
)

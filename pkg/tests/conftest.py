"""Shared builders for the test suite."""
import numpy as np
import pytest

from spectrees.core import SegmentCloud
from spectrees.ingest import PointTable


def make_table(x, y, z, channel=None, reflectance=None, segment_id=None,
               return_number=None, num_returns=None):
    """PointTable from plain lists; unspecified columns get neutral defaults."""
    n = len(x)
    return PointTable(
        segment_id=np.asarray(segment_id if segment_id is not None else np.zeros(n), dtype=np.int64),
        x=np.asarray(x, dtype=np.float64),
        y=np.asarray(y, dtype=np.float64),
        z=np.asarray(z, dtype=np.float64),
        channel=np.asarray(channel if channel is not None else np.ones(n), dtype=np.int64),
        reflectance=np.asarray(reflectance if reflectance is not None else np.full(n, -10.0), dtype=np.float64),
        amplitude=np.full(n, np.nan),
        echo_deviation=np.full(n, np.nan),
        return_number=np.asarray(return_number if return_number is not None else np.ones(n), dtype=np.int64),
        num_returns=np.asarray(num_returns if num_returns is not None else np.ones(n), dtype=np.int64),
    )


def make_segment(x, y, z, channel=None, refl=None, segment_id=1,
                 footprint_area=None, return_number=None, num_returns=None):
    """SegmentCloud with fused reflectance triplets derived from own channels:
    each point's own-channel slot carries `refl`, other slots NaN."""
    n = len(x)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    channel = np.asarray(channel if channel is not None else np.ones(n), dtype=np.int64)
    refl = np.asarray(refl if refl is not None else np.full(n, -10.0), dtype=np.float64)
    triplet = [np.full(n, np.nan) for _ in range(3)]
    for c in (1, 2, 3):
        own = channel == c
        triplet[c - 1][own] = refl[own]
    if footprint_area is None:
        footprint_area = max(1.0, np.ptp(x) * np.ptp(y))
    return SegmentCloud(
        segment_id=segment_id, x=x, y=y, z=z, channel=channel,
        return_number=np.asarray(return_number if return_number is not None else np.ones(n), dtype=np.int64),
        num_returns=np.asarray(num_returns if num_returns is not None else np.ones(n), dtype=np.int64),
        refl_c1=triplet[0], refl_c2=triplet[1], refl_c3=triplet[2],
        footprint_area=float(footprint_area),
        pixel_count=int(round(footprint_area / 0.25)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

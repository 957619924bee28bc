"""Per-segment feature extraction.

Each segment cloud becomes a 61-component vector: crown geometry from the
normalized heights, per-laser-channel reflectance statistics and histograms,
echo-category proportions, spectral ratio indices between the channels, and
explicit channel-missing flags. Reflectance histograms are binned over the
percentile range of the *training* split (the FeatureSchema), and features
that are undefined for a segment (e.g. statistics of an absent channel) are
imputed with the training mean of that feature.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import SegmentCloud

N_FEATURES = 61
N_HIST_BINS = 8
EPS = 1e-9
Z_PERCENTILES = (10, 20, 30, 40, 50, 60, 70, 80, 90)


class EmptySegment(ValueError):
    pass


class EmptyTrainingSplit(ValueError):
    pass


class SchemaNotFitted(ValueError):
    pass


def feature_names() -> tuple[str, ...]:
    names = ["height_max"]
    names += [f"zq{p}_rel" for p in Z_PERCENTILES]
    names += ["z_std_rel", "canopy_relief_ratio", "footprint_area",
              "hull_diameter", "point_density"]
    for c in (1, 2, 3):
        names += [f"c{c}_mean", f"c{c}_std", f"c{c}_median", f"c{c}_p90"]
        names += [f"c{c}_hist{b}" for b in range(1, N_HIST_BINS + 1)]
    names += ["echo_single", "echo_first", "echo_intermediate", "echo_last"]
    names += ["index_c2_c3", "index_c1_c3", "index_c1_c2"]
    names += ["missing_c1", "missing_c2", "missing_c3"]
    assert len(names) == N_FEATURES
    return tuple(names)


FEATURE_NAMES = feature_names()


@dataclass(frozen=True)
class FeatureSchema:
    """Frozen view of the training split: histogram ranges per channel and
    per-feature imputation values for components that come out undefined."""

    channel_ranges: tuple[tuple[float, float], ...]  # (lo, hi) for channels 1..3
    impute_values: np.ndarray                        # shape (N_FEATURES,)

    def __post_init__(self):
        if len(self.channel_ranges) != 3:
            raise ValueError("need ranges for exactly 3 channels")
        if self.impute_values.shape != (N_FEATURES,):
            raise ValueError("impute_values must have one entry per feature")


def _hull_diameter(x: np.ndarray, y: np.ndarray) -> float:
    """Largest pairwise horizontal distance (diameter of the 2D convex hull)."""
    pts = np.unique(np.column_stack([x, y]), axis=0)
    if len(pts) == 1:
        return 0.0
    if len(pts) == 2:
        return float(np.hypot(*(pts[1] - pts[0])))
    try:
        from scipy.spatial import ConvexHull, QhullError
        hull = pts[ConvexHull(pts).vertices]
    except QhullError:
        # collinear: the diameter is between the extremes along the spread axis
        centered = pts - pts.mean(axis=0)
        axis = centered[np.argmax(np.einsum("ij,ij->i", centered, centered))]
        if not axis.any():
            return 0.0
        proj = centered @ axis
        hull = pts[[int(np.argmin(proj)), int(np.argmax(proj))]]
    d2 = ((hull[:, None, :] - hull[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.max()))


def _channel_block(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """mean/std/median/p90 + normalized 8-bin histogram over [lo, hi]; all-NaN
    block when the channel contributed no reflectance values."""
    block = np.full(4 + N_HIST_BINS, np.nan)
    v = values[np.isfinite(values)]
    if len(v) == 0:
        return block
    block[0] = v.mean()
    block[1] = v.std()  # population std, ddof=0
    block[2] = np.percentile(v, 50)
    block[3] = np.percentile(v, 90)
    if not (hi > lo):
        hi = lo + EPS
    clipped = np.clip(v, lo, hi)
    counts, _ = np.histogram(clipped, bins=N_HIST_BINS, range=(lo, hi))
    block[4:] = counts / len(v)
    return block


def extract_raw_features(segment: SegmentCloud,
                         channel_ranges: Sequence[tuple[float, float]]) -> np.ndarray:
    """61-vector with NaN for undefined components (pre-imputation)."""
    n = len(segment)
    if n == 0:
        raise EmptySegment(f"segment {segment.segment_id} has no points")
    f = np.full(N_FEATURES, np.nan)
    z = segment.z
    h = float(z.max())
    f[0] = h
    qs = np.percentile(z, Z_PERCENTILES)
    if h > 0:
        f[1:10] = qs / h
        f[10] = z.std() / h
    span = float(z.max() - z.min())
    if span > 0:
        f[11] = (z.mean() - z.min()) / span
    f[12] = segment.footprint_area
    f[13] = _hull_diameter(segment.x, segment.y)
    f[14] = n / segment.footprint_area
    for c in (1, 2, 3):
        lo, hi = channel_ranges[c - 1]
        if lo == 0.0 and hi == 0.0:
            continue  # channel absent from the training split: always impute
        f[15 + 12 * (c - 1):15 + 12 * c] = _channel_block(
            segment.refl_by_channel[c - 1], lo, hi)
    rn, nr = segment.return_number, segment.num_returns
    f[51] = ((rn == 1) & (nr == 1)).sum() / n
    f[52] = ((rn == 1) & (nr > 1)).sum() / n
    f[53] = ((rn > 1) & (rn < nr)).sum() / n
    f[54] = ((rn == nr) & (nr > 1)).sum() / n
    means = []
    for c in (1, 2, 3):
        v = segment.refl_by_channel[c - 1]
        v = v[np.isfinite(v)]
        means.append(10.0 ** (v.mean() / 10.0) if len(v) else np.nan)
    m1, m2, m3 = means
    f[55] = (m2 - m3) / (m2 + m3 + EPS)
    f[56] = (m1 - m3) / (m1 + m3 + EPS)
    f[57] = (m1 - m2) / (m1 + m2 + EPS)
    counts = segment.channel_counts()
    f[58:61] = [1.0 if counts[c - 1] == 0 else 0.0 for c in (1, 2, 3)]
    return f


def build_schema(train_segments: Sequence[SegmentCloud]) -> FeatureSchema:
    """Channel histogram ranges (p1..p99 of pooled training reflectance) and
    per-feature imputation medians, all from the training split only.

    A degenerate range (p1 == p99, e.g. constant reflectance) is widened to
    +-0.5 dB so histogram bins stay usable."""
    if not train_segments:
        raise EmptyTrainingSplit("cannot build a schema from zero segments")
    ranges = []
    for c in (1, 2, 3):
        pooled = np.concatenate([s.refl_by_channel[c - 1] for s in train_segments])
        pooled = pooled[np.isfinite(pooled)]
        if len(pooled) == 0:
            ranges.append((0.0, 0.0))
            continue
        lo = float(np.percentile(pooled, 1))
        hi = float(np.percentile(pooled, 99))
        if not hi > lo:
            lo, hi = lo - 0.5, hi + 0.5
        ranges.append((lo, hi))
    raw = np.array([extract_raw_features(s, ranges) for s in train_segments])
    with warnings.catch_warnings():
        # all-NaN columns (absent channels) are expected; they impute to 0
        warnings.simplefilter("ignore", RuntimeWarning)
        impute = np.nanmedian(raw, axis=0)
    impute = np.where(np.isfinite(impute), impute, 0.0)
    return FeatureSchema(tuple(ranges), impute)


def apply_schema(raw: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Replace NaN components with the schema's imputation values."""
    if schema is None:
        raise SchemaNotFitted("imputation needs a fitted feature schema")
    out = np.array(raw, dtype=float, copy=True)
    mask = ~np.isfinite(out)
    if out.ndim == 1:
        out[mask] = schema.impute_values[mask]
    else:
        out[mask] = np.broadcast_to(schema.impute_values, out.shape)[mask]
    return out


def featurize_segments(segments: Sequence[SegmentCloud],
                       schema: FeatureSchema) -> np.ndarray:
    """(n_segments, 61) imputed feature matrix, rows in input order."""
    raw = np.array([extract_raw_features(s, schema.channel_ranges)
                    for s in segments]).reshape(len(segments), N_FEATURES)
    return apply_schema(raw, schema)


FEATURES_HEADER = "segment_id," + ",".join(FEATURE_NAMES)


def write_features(path, segment_ids, X: np.ndarray, stamp: Optional[str] = None) -> None:
    X = np.asarray(X, dtype=float).reshape(len(segment_ids), N_FEATURES)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if stamp:
            f.write(f"# {stamp}\n")
        f.write(FEATURES_HEADER + "\n")
        for sid, row in zip(segment_ids, X):
            f.write(str(int(sid)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def read_features(path) -> tuple[np.ndarray, np.ndarray]:
    sids, rows = [], []
    with open(path, "r", encoding="utf-8") as f:
        header_seen = False
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != FEATURES_HEADER:
                    raise ValueError("unexpected features header")
                header_seen = True
                continue
            parts = line.split(",")
            sids.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return (np.array(sids, dtype=np.int64),
            np.array(rows, dtype=np.float64).reshape(len(sids), N_FEATURES))


SCHEMA_VERSION = 1


def schema_to_dict(schema: FeatureSchema) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "channel_ranges": [list(r) for r in schema.channel_ranges],
        "impute_values": schema.impute_values.tolist(),
        "feature_names": list(FEATURE_NAMES),
    }


def schema_from_dict(doc: dict) -> FeatureSchema:
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {version}")
    return FeatureSchema(
        tuple((float(lo), float(hi)) for lo, hi in doc["channel_ranges"]),
        np.array(doc["impute_values"], dtype=np.float64),
    )


GEOMETRY_FEATURES = tuple(range(0, 15)) + tuple(range(51, 55))
"""Structure-only feature indices (heights, shape, echo categories); the
complement carries reflectance information. Used for ablations."""


def geometry_only(features: np.ndarray) -> np.ndarray:
    """Ablation view: keep structural features, drop everything reflectance."""
    return features[..., list(GEOMETRY_FEATURES)]

"""Synthetic multispectral forest stands with exact ground truth.

Trees are parameterized by species archetypes (crown shape, height range,
crown radius, per-channel reflectance distributions). A stand is placed by
dart-throwing with a minimum spacing, draped over a gently varying terrain,
and sampled into a labeled point cloud plus analytic truth: treetop positions
and a per-pixel crown ownership raster. The same machinery can emit isolated
per-segment clouds directly, which is the fast path for classifier studies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import SegmentCloud, SPECIES_NAMES, rng_from, species_from_code
from .ingest import AsciiGrid, LabelRow, PointTable, fuse_channels

CROWN_SHAPES = ("cone", "ellipsoid", "sphere")
MIN_CHANNEL_SEPARATION = 3.0  # dB, required between every archetype pair


class SpacingInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class SpeciesArchetype:
    code: int
    shape: str
    height_range: tuple[float, float]       # m
    crown_ratio: float                      # crown radius = ratio * height
    refl_mean: tuple[float, float, float]   # dB per channel
    refl_std: tuple[float, float, float]    # dB per channel
    density_multiplier: float = 1.0
    crown_base_frac: float = 0.35           # crown base at this fraction of height

    def __post_init__(self):
        if self.shape not in CROWN_SHAPES:
            raise ValueError(f"shape must be one of {CROWN_SHAPES}")
        if not (0 < self.height_range[0] <= self.height_range[1]):
            raise ValueError("height range must be positive and ordered")
        species_from_code(self.code)

    @property
    def name(self) -> str:
        return SPECIES_NAMES[self.code - 1]


def default_archetypes() -> tuple[SpeciesArchetype, ...]:
    """One archetype per species; channel-1 means are 3 dB apart so every pair
    is separable, and the other channels add species-specific structure."""
    shapes = ("cone", "cone", "ellipsoid", "sphere", "ellipsoid",
              "sphere", "sphere", "ellipsoid", "cone")
    heights = ((14, 28), (12, 26), (10, 22), (8, 18), (10, 24),
               (4, 10), (12, 24), (10, 20), (4, 12))
    ratios = (0.12, 0.14, 0.16, 0.17, 0.15, 0.18, 0.15, 0.16, 0.15)
    out = []
    for i in range(9):
        c1 = -2.0 - 3.0 * i
        c2 = -22.0 + 1.7 * i
        c3 = -10.0 - ((i * 5) % 13)
        out.append(SpeciesArchetype(
            code=i + 1,
            shape=shapes[i],
            height_range=heights[i],
            crown_ratio=ratios[i],
            refl_mean=(c1, c2, c3),
            refl_std=(0.8, 0.8, 0.8),
            density_multiplier=1.0 + 0.1 * (i % 3),
        ))
    return tuple(out)


def validate_archetypes(archetypes: Sequence[SpeciesArchetype]) -> None:
    """Every pair must differ by at least MIN_CHANNEL_SEPARATION dB in at
    least one channel mean."""
    for i, a in enumerate(archetypes):
        for b in archetypes[i + 1:]:
            gaps = [abs(x - y) for x, y in zip(a.refl_mean, b.refl_mean)]
            if max(gaps) < MIN_CHANNEL_SEPARATION:
                raise ValueError(
                    f"archetypes {a.code} and {b.code} are closer than "
                    f"{MIN_CHANNEL_SEPARATION} dB in every channel")


def crown_surface(arch: SpeciesArchetype, height: float, r: np.ndarray) -> np.ndarray:
    """Crown surface elevation (above ground) at horizontal distance r from
    the stem; NaN outside the crown radius."""
    radius = arch.crown_ratio * height
    base = arch.crown_base_frac * height
    rr = np.asarray(r, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        frac = np.clip(rr / radius, 0.0, None)
        if arch.shape == "cone":
            z = height - (height - base) * frac
        elif arch.shape == "ellipsoid":
            half = (height - base) / 2.0
            z = (height + base) / 2.0 + half * np.sqrt(np.clip(1 - frac ** 2, 0, 1))
        else:  # sphere on a stem
            rad = min(radius, height / 2.0)
            z = (height - rad) + np.sqrt(np.clip(rad ** 2 - rr ** 2, 0, None))
        return np.where(rr <= radius, z, np.nan)


# ---------------------------------------------------------------------------
# Point sampling


def _draw_echoes(rng, n: int, multi_prob: float):
    """(return_number, num_returns) with a given share of multi-return pulses."""
    multi = rng.random(n) < multi_prob
    num = np.where(multi, rng.integers(2, 4, size=n), 1).astype(np.int64)
    ret = np.minimum(rng.integers(1, 4, size=n), num).astype(np.int64)
    return ret, num


def _sample_crown_points(arch: SpeciesArchetype, height: float, rng,
                         density: float) -> np.ndarray:
    """(n, 7) columns x y z channel refl return_number num_returns; x,y are
    stem-relative, z above ground.

    Pulses fall on a jittered grid, as a scanner's pattern does, so crown
    coverage is even at any density. The first return of each pulse hugs the
    crown surface; multi-return pulses add deeper echoes with exponential
    penetration.
    """
    radius = arch.crown_ratio * height
    base = arch.crown_base_frac * height
    spacing = 1.0 / math.sqrt(density * arch.density_multiplier)
    half = int(math.ceil(radius / spacing))
    lattice = np.arange(-half, half + 1) * spacing
    gx, gy = np.meshgrid(lattice, lattice)
    x = gx.ravel() + rng.uniform(-0.35, 0.35, gx.size) * spacing
    y = gy.ravel() + rng.uniform(-0.35, 0.35, gy.size) * spacing
    r = np.hypot(x, y)
    inside = r <= radius
    x, y, r = x[inside], y[inside], r[inside]
    n1 = len(x)
    if n1 == 0:  # degenerate crown smaller than the pulse spacing
        x = np.zeros(1)
        y = np.zeros(1)
        r = np.zeros(1)
        n1 = 1
    surf = crown_surface(arch, height, r)
    z1 = surf - np.abs(rng.normal(0.0, 0.03, size=n1))
    multi_prob = 0.35 if arch.shape == "cone" else 0.2
    multi = rng.random(n1) < multi_prob
    num = np.where(multi, rng.integers(2, 4, size=n1), 1).astype(np.int64)
    cols = [np.column_stack([x, y, z1, np.ones(n1), num])]
    for k in (2, 3):
        deep = np.flatnonzero(num >= k)
        if len(deep) == 0:
            continue
        depth = (k - 1) * 0.3 + rng.exponential(1.2, size=len(deep))
        zk = np.maximum(surf[deep] - depth, base)
        xk = x[deep] + rng.normal(0, 0.05, len(deep))
        yk = y[deep] + rng.normal(0, 0.05, len(deep))
        cols.append(np.column_stack([xk, yk, zk,
                                     np.full(len(deep), k), num[deep]]))
    pts = np.concatenate(cols)
    n = len(pts)
    channel = rng.integers(1, 4, size=n)
    mean = np.array(arch.refl_mean)[channel - 1]
    std = np.array(arch.refl_std)[channel - 1]
    refl = rng.normal(mean, std)
    # columns: x y z channel refl return_number num_returns
    return np.column_stack([pts[:, 0], pts[:, 1], pts[:, 2], channel, refl,
                            pts[:, 3], pts[:, 4]])


def _segment_from_matrix(sid: int, m: np.ndarray, footprint_area: float,
                         cellsize: float = 0.5) -> SegmentCloud:
    table = PointTable(
        segment_id=np.full(len(m), sid, dtype=np.int64),
        x=m[:, 0], y=m[:, 1], z=m[:, 2],
        channel=m[:, 3].astype(np.int64),
        reflectance=m[:, 4],
        amplitude=np.full(len(m), np.nan),
        echo_deviation=np.full(len(m), np.nan),
        return_number=m[:, 5].astype(np.int64),
        num_returns=m[:, 6].astype(np.int64),
    )
    fused = fuse_channels(table)
    return SegmentCloud(
        segment_id=sid,
        x=fused.x, y=fused.y, z=fused.z,
        channel=fused.channel,
        return_number=fused.return_number, num_returns=fused.num_returns,
        refl_c1=fused.refl_c1, refl_c2=fused.refl_c2, refl_c3=fused.refl_c3,
        footprint_area=footprint_area,
        pixel_count=max(1, int(round(footprint_area / cellsize ** 2))),
    )


def generate_labeled_segments(per_class: int, seed: int,
                              archetypes: Optional[Sequence[SpeciesArchetype]] = None,
                              density: float = 10.0) -> tuple[list[SegmentCloud], np.ndarray]:
    """Isolated, height-normalized, fused segment clouds: per_class segments
    for each archetype. Returns (segments, species codes), segment ids 1..N."""
    archetypes = tuple(archetypes or default_archetypes())
    validate_archetypes(archetypes)
    segments: list[SegmentCloud] = []
    codes: list[int] = []
    sid = 0
    for arch in archetypes:
        lo, hi = arch.height_range
        for i in range(per_class):
            sid += 1
            rng = rng_from(seed, arch.code, i)
            height = lo + (hi - lo) * rng.random()
            m = _sample_crown_points(arch, height, rng, density)
            area = math.pi * (arch.crown_ratio * height) ** 2
            segments.append(_segment_from_matrix(sid, m, area))
            codes.append(arch.code)
    return segments, np.array(codes, dtype=np.int64)


# ---------------------------------------------------------------------------
# Full stands


@dataclass(frozen=True)
class SynthConfig:
    n_trees: int = 60
    extent: tuple[float, float] = (80.0, 80.0)   # m
    min_spacing: float = 6.0                     # m between stems
    density: float = 20.0                        # canopy points / m^2
    ground_density: float = 4.0                  # ground points / m^2
    noise_fraction: float = 0.002                # stray high points
    terrain_slope: tuple[float, float] = (0.02, -0.015)
    terrain_amplitude: float = 0.4
    terrain_wavelength: float = 37.0
    base_elevation: float = 120.0
    seed: int = 0
    archetypes: tuple[SpeciesArchetype, ...] = field(default_factory=default_archetypes)
    cellsize: float = 0.5


@dataclass(frozen=True)
class TruthTree:
    tree_id: int
    code: int
    x: float
    y: float
    height: float
    crown_radius: float


@dataclass(frozen=True)
class SynthForest:
    table: PointTable          # raw (unnormalized) point cloud
    trees: list[TruthTree]
    truth_segments: AsciiGrid  # analytic crown ownership, 0 = open ground
    labels: list[LabelRow]
    config: SynthConfig


def terrain_elevation(cfg: SynthConfig, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    sx, sy = cfg.terrain_slope
    wave = np.sin(2 * math.pi * np.asarray(x) / cfg.terrain_wavelength) * \
        np.sin(2 * math.pi * np.asarray(y) / cfg.terrain_wavelength)
    return cfg.base_elevation + sx * np.asarray(x) + sy * np.asarray(y) + \
        cfg.terrain_amplitude * wave


def _place_stems(cfg: SynthConfig, rng) -> np.ndarray:
    """Dart throwing with minimum spacing; margin keeps crowns inside the tile."""
    w, h = cfg.extent
    crown_max = max(a.crown_ratio * a.height_range[1] for a in cfg.archetypes)
    margin = max(cfg.min_spacing / 2.0, crown_max + 0.5)
    if w <= 2 * margin or h <= 2 * margin:
        raise SpacingInfeasible(f"extent {cfg.extent} too small for margin {margin:.1f}")
    placed: list[tuple[float, float]] = []
    attempts = 0
    max_attempts = 400 * cfg.n_trees
    while len(placed) < cfg.n_trees:
        if attempts >= max_attempts:
            raise SpacingInfeasible(
                f"placed {len(placed)} of {cfg.n_trees} stems after "
                f"{max_attempts} attempts at spacing {cfg.min_spacing}")
        attempts += 1
        px = margin + rng.random() * (w - 2 * margin)
        py = margin + rng.random() * (h - 2 * margin)
        if all((px - qx) ** 2 + (py - qy) ** 2 >= cfg.min_spacing ** 2
               for qx, qy in placed):
            placed.append((px, py))
    return np.array(placed)


def _truth_raster(cfg: SynthConfig, trees: Sequence[TruthTree],
                  min_height: float = 2.0) -> AsciiGrid:
    """Analytic crown ownership: each pixel goes to the tree whose crown
    surface is highest there, masked to surfaces of at least min_height."""
    w, h = cfg.extent
    ncols = int(math.ceil(w / cfg.cellsize))
    nrows = int(math.ceil(h / cfg.cellsize))
    xs = (np.arange(ncols) + 0.5) * cfg.cellsize
    ys = (nrows - 1 - np.arange(nrows) + 0.5) * cfg.cellsize
    gx, gy = np.meshgrid(xs, ys)
    best = np.zeros((nrows, ncols))
    owner = np.zeros((nrows, ncols), dtype=np.int64)
    by_code = {a.code: a for a in cfg.archetypes}
    for t in trees:
        r = np.hypot(gx - t.x, gy - t.y)
        surf = crown_surface(by_code[t.code], t.height, r)
        surf = np.where(np.isfinite(surf), surf, 0.0)
        take = surf > best
        best[take] = surf[take]
        owner[take] = t.tree_id
    owner[best < min_height] = 0
    return AsciiGrid(ncols, nrows, 0.0, 0.0, cfg.cellsize, -9999, owner)


def overlap_matching(predicted: AsciiGrid, truth: AsciiGrid) -> dict[int, int]:
    """Map each predicted segment id to the truth id covering most of its
    pixels (ties to the lower truth id); rasters must share their extent."""
    p = predicted.values.astype(np.int64).ravel()
    t = truth.values.astype(np.int64).ravel()
    if p.shape != t.shape:
        raise ValueError("rasters have different shapes")
    both = (p > 0) & (t > 0)
    out: dict[int, int] = {}
    if not both.any():
        return out
    pairs = p[both] * (t.max() + 1) + t[both]
    uniq, counts = np.unique(pairs, return_counts=True)
    pid = uniq // (t.max() + 1)
    tid = uniq % (t.max() + 1)
    # ascending count, descending tid on ties: the final write per pid is its
    # largest-count pairing, lowest tid among equal counts
    order = np.lexsort((-tid, counts))
    for i in order:
        out[int(pid[i])] = int(tid[i])
    return out


def treetop_match_fraction(detected_xy: np.ndarray, trees: Sequence[TruthTree],
                           tolerance: float = 1.0) -> float:
    """Fraction of true treetops with a one-to-one detected match within
    tolerance (greedy nearest-pair matching)."""
    if len(trees) == 0:
        return 1.0
    if len(detected_xy) == 0:
        return 0.0
    txy = np.array([[t.x, t.y] for t in trees])
    d = np.hypot(txy[:, None, 0] - detected_xy[None, :, 0],
                 txy[:, None, 1] - detected_xy[None, :, 1])
    pairs = [(d[i, j], i, j) for i in range(d.shape[0]) for j in range(d.shape[1])
             if d[i, j] <= tolerance]
    pairs.sort()
    used_t, used_d = set(), set()
    matched = 0
    for dist, i, j in pairs:
        if i in used_t or j in used_d:
            continue
        used_t.add(i)
        used_d.add(j)
        matched += 1
    return matched / len(trees)


def crown_agreement(predicted: AsciiGrid, truth: AsciiGrid,
                    matching: Optional[dict[int, int]] = None) -> float:
    """Fraction of truth crown pixels whose predicted segment maps to the
    right tree under the overlap matching."""
    if matching is None:
        matching = overlap_matching(predicted, truth)
    p = predicted.values.astype(np.int64)
    t = truth.values.astype(np.int64)
    mask = t > 0
    if not mask.any():
        return 1.0
    mapped = np.zeros_like(p)
    for pid, tid in matching.items():
        mapped[p == pid] = tid
    return float((mapped[mask] == t[mask]).mean())


def generate_forest(cfg: SynthConfig) -> SynthForest:
    validate_archetypes(cfg.archetypes)
    rng = rng_from(cfg.seed, 0)
    stems = _place_stems(cfg, rng)
    trees: list[TruthTree] = []
    blocks: list[np.ndarray] = []
    sids: list[np.ndarray] = []
    for i, (px, py) in enumerate(stems, start=1):
        arch = cfg.archetypes[(i - 1) % len(cfg.archetypes)]
        tree_rng = rng_from(cfg.seed, 1, i)
        lo, hi = arch.height_range
        height = lo + (hi - lo) * tree_rng.random()
        m = _sample_crown_points(arch, height, tree_rng, cfg.density)
        m[:, 0] += px
        m[:, 1] += py
        m[:, 2] += terrain_elevation(cfg, m[:, 0], m[:, 1])
        blocks.append(m)
        sids.append(np.full(len(m), i, dtype=np.int64))
        trees.append(TruthTree(i, arch.code, float(px), float(py), float(height),
                               float(arch.crown_ratio * height)))
    # ground: jittered grid at ground_density, plus faint reflectance
    grng = rng_from(cfg.seed, 2)
    w, h = cfg.extent
    n_ground = int(cfg.ground_density * w * h)
    gx = grng.random(n_ground) * w
    gy = grng.random(n_ground) * h
    gz = terrain_elevation(cfg, gx, gy) + grng.normal(0, 0.03, n_ground)
    gch = grng.integers(1, 4, size=n_ground)
    grefl = grng.normal(-14.0, 1.0, size=n_ground)
    grn, gnr = _draw_echoes(grng, n_ground, 0.15)
    ground = np.column_stack([gx, gy, gz, gch, grefl, grn, gnr])
    blocks.append(ground)
    sids.append(np.zeros(n_ground, dtype=np.int64))
    # stray noise points far above the canopy
    n_canopy = sum(len(b) for b in blocks)
    n_noise = max(1, int(cfg.noise_fraction * n_canopy))
    nrng = rng_from(cfg.seed, 3)
    nx = nrng.random(n_noise) * w
    ny = nrng.random(n_noise) * h
    nz = terrain_elevation(cfg, nx, ny) + 45.0 + nrng.random(n_noise) * 15.0
    nch = nrng.integers(1, 4, size=n_noise)
    nrefl = nrng.normal(-20.0, 2.0, size=n_noise)
    noise = np.column_stack([nx, ny, nz, nch, nrefl,
                             np.ones(n_noise), np.ones(n_noise)])
    blocks.append(noise)
    sids.append(np.zeros(n_noise, dtype=np.int64))
    m = np.concatenate(blocks)
    table = PointTable(
        segment_id=np.concatenate(sids),
        x=m[:, 0], y=m[:, 1], z=m[:, 2],
        channel=m[:, 3].astype(np.int64),
        reflectance=m[:, 4],
        amplitude=np.full(len(m), np.nan),
        echo_deviation=np.full(len(m), np.nan),
        return_number=m[:, 5].astype(np.int64),
        num_returns=m[:, 6].astype(np.int64),
    )
    labels = [LabelRow(t.tree_id, t.code) for t in trees]
    return SynthForest(table=table, trees=trees,
                       truth_segments=_truth_raster(cfg, trees),
                       labels=labels, config=cfg)

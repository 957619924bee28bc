"""Canopy height model, treetop detection, watershed segmentation.

The segmentation surface is a canopy height model (CHM) rasterized from first
returns, smoothed with a Gaussian whose window grows with canopy height, so
that low vegetation keeps detail while tall canopies are smoothed hard enough
to suppress within-crown maxima.
"""
from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .core import CrownClass, SegmentCloud, species_from_code
from .ingest import AsciiGrid, PointTable, grid_extent_for

# Smoothing windows (px) keyed by the raw-height interval they apply to.
SMOOTHING_WINDOWS = (3, 5, 7, 9)
HEIGHT_BREAKS = (7.0, 20.0, 30.0)  # raw CHM height thresholds between windows
DEFAULT_CELLSIZE = 0.5
MIN_TREE_HEIGHT = 2.0  # m; cells below this are background, no treetops


class NoVegetationPoints(ValueError):
    """No first returns on the CHM channels; nothing to rasterize."""


class NoMarkers(ValueError):
    """Watershed called without any treetop markers."""


class PointOutsideRaster(UserWarning):
    """Points fell outside the segment raster and were dropped."""


@dataclass(frozen=True)
class Treetop:
    tree_id: int
    row: int
    col: int
    x: float
    y: float
    height: float  # smoothed CHM value at the detected cell


@dataclass(frozen=True)
class SegmentationParams:
    cellsize: float = DEFAULT_CELLSIZE
    min_height: float = MIN_TREE_HEIGHT
    windows: tuple[int, ...] = SMOOTHING_WINDOWS
    height_breaks: tuple[float, ...] = HEIGHT_BREAKS

    def __post_init__(self):
        if len(self.windows) != len(self.height_breaks) + 1:
            raise ValueError("need one window per height interval")
        if any(w % 2 == 0 or w < 3 for w in self.windows):
            raise ValueError("windows must be odd and >= 3")


def build_chm(table: PointTable, cellsize: float = DEFAULT_CELLSIZE,
              extent: Optional[tuple[int, int, float, float]] = None,
              channels: tuple[int, ...] = (1, 2)) -> AsciiGrid:
    """Maximum normalized height of first returns (channels 1 and 2) per cell;
    cells without returns are 0."""
    first = (table.return_number == 1) & np.isin(table.channel, channels)
    if not first.any():
        raise NoVegetationPoints("no first returns on the CHM channels")
    if extent is None:
        extent = grid_extent_for(table.x[first], table.y[first], cellsize)
    ncols, nrows, xll, yll = extent
    grid = AsciiGrid(ncols, nrows, xll, yll, cellsize, -9999.0,
                     np.zeros((nrows, ncols)))
    row, col = grid.cell_of(table.x[first], table.y[first])
    inside = grid.in_bounds(row, col)
    np.maximum.at(grid.values, (row[inside], col[inside]),
                  np.maximum(table.z[first][inside], 0.0))
    return grid


def _gaussian_kernel(w: int) -> np.ndarray:
    sigma = w / 6.0
    half = w // 2
    g = np.exp(-np.arange(-half, half + 1) ** 2 / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _window_index(raw: np.ndarray, breaks: Sequence[float]) -> np.ndarray:
    """Index into the window list for each cell, from the raw CHM height."""
    idx = np.zeros(raw.shape, dtype=np.int64)
    for b in breaks:
        idx += raw >= b
    return idx


def window_for_height(height: float,
                      params: SegmentationParams = SegmentationParams()) -> int:
    """Smoothing window (pixels) for a raw canopy height; intervals are
    closed on the left, so a height exactly on a break takes the wider window."""
    if height < 0:
        raise ValueError("height must be non-negative")
    return params.windows[sum(height >= b for b in params.height_breaks)]


def smooth_chm(chm: AsciiGrid, params: SegmentationParams = SegmentationParams()) -> AsciiGrid:
    """Variable-window Gaussian smoothing.

    Each cell takes its value from the full-raster smoothing whose window is
    selected by the cell's *raw* height. Near raster borders the kernel is
    renormalized over the overlapping part, so edge cells are unbiased.
    """
    raw = chm.values
    ones = np.ones_like(raw)
    layers = []
    for w in params.windows:
        k = _gaussian_kernel(w)
        num = ndimage.convolve(raw, k, mode="constant", cval=0.0)
        den = ndimage.convolve(ones, k, mode="constant", cval=0.0)
        layers.append(num / den)
    stack = np.stack(layers)
    sel = _window_index(raw, params.height_breaks)
    rr, cc = np.indices(raw.shape)
    smoothed = stack[sel, rr, cc]
    return AsciiGrid(chm.ncols, chm.nrows, chm.xllcorner, chm.yllcorner,
                     chm.cellsize, chm.nodata_value, smoothed)


def detect_treetops(chm: AsciiGrid, smoothed: AsciiGrid,
                    params: SegmentationParams = SegmentationParams()) -> list[Treetop]:
    """Local maxima of the smoothed CHM.

    A cell qualifies when its smoothed value is >= everything in its w x w
    window (w chosen by raw height), strictly greater than at least one
    neighbor, and >= min_height. A plateau of equal qualifying cells yields
    a single treetop at its lowest (row, col). Treetops are numbered 1..K in
    (row, col) order.
    """
    s = smoothed.values
    sel = _window_index(chm.values, params.height_breaks)
    max_layers = []
    min_layers = []
    for w in params.windows:
        max_layers.append(ndimage.maximum_filter(s, size=w, mode="constant", cval=-np.inf))
        min_layers.append(ndimage.minimum_filter(s, size=w, mode="constant", cval=np.inf))
    rr, cc = np.indices(s.shape)
    wmax = np.stack(max_layers)[sel, rr, cc]
    wmin = np.stack(min_layers)[sel, rr, cc]
    qualifying = (s >= params.min_height) & (s == wmax)
    labels, n_comp = ndimage.label(qualifying, structure=np.ones((3, 3), dtype=int))
    tops: list[tuple[int, int, float]] = []
    # Strictness ignores sub-nanometer gaps: border renormalization leaves
    # ~1 ulp of noise on flat surfaces, which must not mint maxima there.
    has_lower = qualifying & (wmin < s - 1e-9)
    for comp in range(1, n_comp + 1):
        cells = np.argwhere(labels == comp)  # sorted by (row, col) already
        if not has_lower[labels == comp].any():
            continue  # flat against everything it can see: not a maximum
        r, c = cells[0]
        tops.append((int(r), int(c), float(s[r, c])))
    tops.sort(key=lambda t: (t[0], t[1]))
    out = []
    for i, (r, c, h) in enumerate(tops, start=1):
        x, y = smoothed.cell_center(r, c)
        out.append(Treetop(i, r, c, float(x), float(y), h))
    return out


def watershed_segments(smoothed: AsciiGrid, treetops: Sequence[Treetop],
                       params: SegmentationParams = SegmentationParams()) -> AsciiGrid:
    """Marker-controlled watershed by priority flooding.

    Flooding starts from the treetop cells and descends the smoothed CHM;
    each cell joins the segment that reaches it first, higher cells first,
    insertion order breaking exact ties. Cells below min_height stay 0.
    """
    if not treetops:
        raise NoMarkers("watershed needs at least one treetop marker")
    s = smoothed.values
    nrows, ncols = s.shape
    seg = np.zeros((nrows, ncols), dtype=np.int64)
    background = s < params.min_height
    heap: list[tuple[float, int, int, int, int]] = []
    counter = 0
    for t in treetops:
        if background[t.row, t.col]:
            continue
        seg[t.row, t.col] = t.tree_id
        heapq.heappush(heap, (-s[t.row, t.col], counter, t.row, t.col, t.tree_id))
        counter += 1
    while heap:
        _, _, r, c, sid = heapq.heappop(heap)
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if nr < 0 or nr >= nrows or nc < 0 or nc >= ncols:
                continue
            if seg[nr, nc] != 0 or background[nr, nc]:
                continue
            seg[nr, nc] = sid
            heapq.heappush(heap, (-s[nr, nc], counter, nr, nc, sid))
            counter += 1
    return AsciiGrid(smoothed.ncols, smoothed.nrows, smoothed.xllcorner,
                     smoothed.yllcorner, smoothed.cellsize, -9999, seg)


# ---------------------------------------------------------------------------
# Boundary polygonization

# direction codes: 0=east(+x) 1=north(+y) 2=west(-x) 3=south(-y)
_DIR_VEC = {0: (1, 0), 1: (0, 1), 2: (-1, 0), 3: (0, -1)}


def _segment_edges(mask: np.ndarray, nrows: int):
    """Directed boundary edges on the vertex lattice, interior on the left.

    Vertices are (vx, vy) with world position (xll + vx*cs, yll + vy*cs);
    vy = nrows - row counts up from the south edge.
    """
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}
    rows, cols = np.nonzero(mask)
    padded = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    for r, c in zip(rows.tolist(), cols.tolist()):
        vy_top = nrows - r
        vy_bot = vy_top - 1
        if not padded[r, c + 1]:        # open to the north: walk west
            edges.setdefault((c + 1, vy_top), []).append((c, vy_top))
        if not padded[r + 2, c + 1]:    # open to the south: walk east
            edges.setdefault((c, vy_bot), []).append((c + 1, vy_bot))
        if not padded[r + 1, c]:        # open to the west: walk south
            edges.setdefault((c, vy_top), []).append((c, vy_bot))
        if not padded[r + 1, c + 2]:    # open to the east: walk north
            edges.setdefault((c + 1, vy_bot), []).append((c + 1, vy_top))
    return edges


def _direction(a: tuple[int, int], b: tuple[int, int]) -> int:
    dx, dy = b[0] - a[0], b[1] - a[1]
    return {(1, 0): 0, (0, 1): 1, (-1, 0): 2, (0, -1): 3}[(dx, dy)]


def _trace_rings(edges: dict) -> list[list[tuple[int, int]]]:
    """Stitch directed edges into closed rings; at a vertex with several
    outgoing edges take the sharpest left turn, keeping the interior hugged."""
    for v in edges.values():
        v.sort()
    rings = []
    while edges:
        start = min(edges)
        prev = start
        cur = edges[start].pop(0)
        if not edges[start]:
            del edges[start]
        ring = [start, cur]
        while cur != start:
            outs = edges[cur]
            if len(outs) == 1:
                nxt = outs.pop(0)
            else:
                d_in = _direction(prev, cur)
                # left turn first, then straight, then right
                best = min(outs, key=lambda o: (_direction(cur, o) - d_in - 1) % 4)
                outs.remove(best)
                nxt = best
            if not outs:
                del edges[cur]
            prev, cur = cur, nxt
            ring.append(cur)
        rings.append(ring)
    return rings


def ring_area(ring: Sequence[tuple[float, float]]) -> float:
    """Signed shoelace area; positive for counterclockwise rings. The ring is
    translated to its first vertex before summing so typical UTM-sized
    coordinates do not lose precision."""
    x0, y0 = ring[0]
    area = 0.0
    for (ax, ay), (bx, by) in zip(ring[:-1], ring[1:]):
        area += (ax - x0) * (by - y0) - (bx - x0) * (ay - y0)
    return area / 2.0


def _point_in_ring(pt: tuple[float, float], ring: Sequence[tuple[float, float]]) -> bool:
    x, y = pt
    inside = False
    for (ax, ay), (bx, by) in zip(ring[:-1], ring[1:]):
        if (ay > y) != (by > y):
            t = (y - ay) / (by - ay)
            if x < ax + t * (bx - ax):
                inside = not inside
    return inside


def trace_boundaries(segments: AsciiGrid) -> dict:
    """GeoJSON FeatureCollection of segment outlines in world coordinates.

    Rings follow pixel edges with the interior on the left, so outer rings are
    counterclockwise and holes clockwise; holes are attached to the outer ring
    containing them.
    """
    seg = segments.values.astype(np.int64)
    cs = segments.cellsize
    xll, yll = segments.xllcorner, segments.yllcorner
    features = []
    for sid in np.unique(seg):
        if sid <= 0:
            continue
        mask = seg == sid
        edges = _segment_edges(mask, segments.nrows)
        rings = _trace_rings(edges)
        world = [[(xll + vx * cs, yll + vy * cs) for vx, vy in ring] for ring in rings]
        outers = [(r, ring_area(r)) for r in world if ring_area(r) > 0]
        holes = [r for r in world if ring_area(r) < 0]
        polys = []
        for outer, _ in sorted(outers, key=lambda p: -p[1]):
            polys.append([outer])
        for hole in holes:
            probe = hole[0]
            for poly in polys:
                if _point_in_ring(probe, poly[0]):
                    poly.append(hole)
                    break
        if len(polys) == 1:
            geometry = {"type": "Polygon",
                        "coordinates": [[list(pt) for pt in ring] for ring in polys[0]]}
        else:
            geometry = {"type": "MultiPolygon",
                        "coordinates": [[[list(pt) for pt in ring] for ring in poly]
                                        for poly in polys]}
        features.append({
            "type": "Feature",
            "properties": {"segment_id": int(sid)},
            "geometry": geometry,
        })
    return {"type": "FeatureCollection", "features": features}


# ---------------------------------------------------------------------------
# Point-to-segment assignment


def extract_segment_clouds(table: PointTable, segments: AsciiGrid) -> list[SegmentCloud]:
    """Group fused points by the segment raster cell they fall in; points on
    background cells or outside the raster are dropped. Segments are returned
    in increasing id order; footprint area is pixel count x cellsize^2."""
    if not table.fused:
        raise ValueError("fuse_channels must run before segment extraction")
    row, col = segments.cell_of(table.x, table.y)
    inside = segments.in_bounds(row, col)
    n_outside = int((~inside).sum())
    if n_outside:
        warnings.warn(f"{n_outside} points outside the segment raster were dropped",
                      PointOutsideRaster, stacklevel=2)
    pt_seg = np.zeros(len(table), dtype=np.int64)
    pt_seg[inside] = segments.values.astype(np.int64)[row[inside], col[inside]]
    ids, counts = np.unique(segments.values[segments.values > 0].astype(np.int64),
                            return_counts=True)
    pixel_counts = dict(zip(ids.tolist(), counts.tolist()))
    cs2 = segments.cellsize ** 2
    clouds = []
    for sid in ids.tolist():
        keep = np.flatnonzero(pt_seg == sid)
        if len(keep) == 0:
            continue
        clouds.append(SegmentCloud(
            segment_id=int(sid),
            x=table.x[keep].copy(), y=table.y[keep].copy(), z=table.z[keep].copy(),
            channel=table.channel[keep].copy(),
            return_number=table.return_number[keep].copy(),
            num_returns=table.num_returns[keep].copy(),
            refl_c1=table.refl_c1[keep].copy(),
            refl_c2=table.refl_c2[keep].copy(),
            refl_c3=table.refl_c3[keep].copy(),
            footprint_area=pixel_counts[sid] * cs2,
            pixel_count=pixel_counts[sid],
        ))
    return clouds


def _hull_area(x: np.ndarray, y: np.ndarray) -> float:
    pts = np.unique(np.column_stack([x, y]), axis=0)
    if len(pts) < 3:
        return 0.0
    try:
        from scipy.spatial import ConvexHull, QhullError
        return float(ConvexHull(pts).volume)  # 2D: volume is the area
    except QhullError:
        return 0.0


def clouds_from_table(table: PointTable, segments: Optional[AsciiGrid] = None,
                      min_footprint: float = 0.25) -> list[SegmentCloud]:
    """Group fused points by their segment_id column (0 = unassigned, dropped).

    With a segment raster, footprints come from pixel counts; otherwise the
    convex hull area of each segment's points stands in, floored at
    min_footprint so degenerate segments stay usable.
    """
    if not table.fused:
        raise ValueError("fuse_channels must run before grouping")
    pixel_counts: dict[int, int] = {}
    if segments is not None:
        ids, counts = np.unique(
            segments.values[segments.values > 0].astype(np.int64), return_counts=True)
        pixel_counts = dict(zip(ids.tolist(), counts.tolist()))
    cs2 = segments.cellsize ** 2 if segments is not None else 0.25
    clouds = []
    for sid in np.unique(table.segment_id):
        if sid <= 0:
            continue
        keep = np.flatnonzero(table.segment_id == sid)
        if int(sid) in pixel_counts:
            area = pixel_counts[int(sid)] * cs2
            pixels = pixel_counts[int(sid)]
        else:
            area = max(_hull_area(table.x[keep], table.y[keep]), min_footprint)
            pixels = max(1, int(round(area / cs2)))
        clouds.append(SegmentCloud(
            segment_id=int(sid),
            x=table.x[keep].copy(), y=table.y[keep].copy(), z=table.z[keep].copy(),
            channel=table.channel[keep].copy(),
            return_number=table.return_number[keep].copy(),
            num_returns=table.num_returns[keep].copy(),
            refl_c1=table.refl_c1[keep].copy(),
            refl_c2=table.refl_c2[keep].copy(),
            refl_c3=table.refl_c3[keep].copy(),
            footprint_area=float(area),
            pixel_count=int(pixels),
        ))
    return clouds


# ---------------------------------------------------------------------------
# Crown classes


@dataclass(frozen=True)
class CrownClassParams:
    roadside_distance: float = 2.0
    neighborhood: float = 8.0       # m, for isolated/dominant tests
    suppressed_distance: float = 6.0  # m, for smaller-next-to-larger
    suppressed_margin: float = 5.0    # m, height gap defining a larger neighbor


def assign_crown_classes(treetops: Sequence[Treetop],
                         roadside_xy: Optional[np.ndarray] = None,
                         params: CrownClassParams = CrownClassParams()) -> dict[int, CrownClass]:
    """Crown class per treetop, by precedence:

    Roadside (within roadside_distance of a registry point), Isolated (every
    neighbor within the neighborhood is at most half own height, vacuously true
    with no neighbors), Dominant (strictly tallest in the neighborhood),
    SmallerNextToLarger (a neighbor within suppressed_distance is at least
    suppressed_margin taller), else CoDominant. Distances are horizontal,
    treetop to treetop.
    """
    xy = np.array([[t.x, t.y] for t in treetops]) if treetops else np.zeros((0, 2))
    heights = np.array([t.height for t in treetops])
    out: dict[int, CrownClass] = {}
    road = None
    if roadside_xy is not None and len(roadside_xy) > 0:
        from scipy.spatial import cKDTree
        road = cKDTree(np.asarray(roadside_xy, dtype=float))
    for i, t in enumerate(treetops):
        if road is not None:
            d, _ = road.query([t.x, t.y])
            if d <= params.roadside_distance:
                out[t.tree_id] = CrownClass.ROADSIDE
                continue
        d = np.hypot(xy[:, 0] - t.x, xy[:, 1] - t.y)
        near = (d <= params.neighborhood) & (np.arange(len(treetops)) != i)
        if not near.any() or (heights[near] <= t.height / 2.0).all():
            out[t.tree_id] = CrownClass.ISOLATED
            continue
        if (heights[near] < t.height).all():
            out[t.tree_id] = CrownClass.DOMINANT
            continue
        close = (d <= params.suppressed_distance) & (np.arange(len(treetops)) != i)
        if close.any() and (heights[close] >= t.height + params.suppressed_margin).any():
            out[t.tree_id] = CrownClass.SMALLER_NEXT_TO_LARGER
            continue
        out[t.tree_id] = CrownClass.CO_DOMINANT
    return out


# ---------------------------------------------------------------------------
# Orchestration


@dataclass(frozen=True)
class SegmentationResult:
    chm: AsciiGrid
    smoothed: AsciiGrid
    treetops: list[Treetop]
    segments: AsciiGrid


def segment_tile(table: PointTable,
                 params: SegmentationParams = SegmentationParams()) -> SegmentationResult:
    """CHM -> smoothing -> treetops -> watershed, on normalized heights."""
    chm = build_chm(table, params.cellsize)
    smoothed = smooth_chm(chm, params)
    tops = detect_treetops(chm, smoothed, params)
    if tops:
        seg = watershed_segments(smoothed, tops, params)
    else:
        seg = AsciiGrid(chm.ncols, chm.nrows, chm.xllcorner, chm.yllcorner,
                        chm.cellsize, -9999, np.zeros_like(chm.values, dtype=np.int64))
    return SegmentationResult(chm, smoothed, tops, seg)

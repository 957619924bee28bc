"""Canonical dataset formats and point-cloud preprocessing.

Text formats (UTF-8, '\\n' line endings, '.' decimal separator, empty field =
absent/NA):

  points.csv  header: segment_id,x,y,z,channel,reflectance,amplitude,
              echo_deviation,return_number,num_returns
  labels.csv  header: segment_id,species_code,profile_category,crown_class,split
  *.grid      ESRI-ASCII-style header (ncols, nrows, xllcorner, yllcorner,
              cellsize, NODATA_value) followed by row-major values, rows
              running north to south.

Lines starting with '#' are metadata stamps and are skipped by every reader.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .core import (
    CrownClass,
    InvariantViolation,
    PointRecord,
    ProfileCategory,
    SegmentCloud,
    Split,
    rng_from,
    species_from_code,
)

POINTS_HEADER = "segment_id,x,y,z,channel,reflectance,amplitude,echo_deviation,return_number,num_returns"
LABELS_HEADER = "segment_id,species_code,profile_category,crown_class,split"

FUSION_RADIUS = 0.20  # m, donor search radius between channels


class MalformedRow(ValueError):
    def __init__(self, message: str, line_no: int):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class NoGroundPoints(ValueError):
    pass


# ---------------------------------------------------------------------------
# Columnar point storage


@dataclass
class PointTable:
    """Columnar point cloud; the working representation for all bulk operations.

    NaN marks absent reflectance/amplitude/echo_deviation. Fused per-channel
    reflectance columns are None until fuse_channels has run.
    """

    segment_id: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    channel: np.ndarray
    reflectance: np.ndarray
    amplitude: np.ndarray
    echo_deviation: np.ndarray
    return_number: np.ndarray
    num_returns: np.ndarray
    refl_c1: Optional[np.ndarray] = None
    refl_c2: Optional[np.ndarray] = None
    refl_c3: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.x)

    @property
    def fused(self) -> bool:
        return self.refl_c1 is not None

    def select(self, idx: np.ndarray) -> "PointTable":
        cols = {}
        for name in ("segment_id", "x", "y", "z", "channel", "reflectance",
                     "amplitude", "echo_deviation", "return_number", "num_returns",
                     "refl_c1", "refl_c2", "refl_c3"):
            v = getattr(self, name)
            cols[name] = None if v is None else v[idx]
        return PointTable(**cols)

    def to_records(self) -> list[tuple[int, PointRecord]]:
        return [
            (int(self.segment_id[i]),
             PointRecord(float(self.x[i]), float(self.y[i]), float(self.z[i]),
                         int(self.channel[i]), float(self.reflectance[i]),
                         float(self.amplitude[i]), float(self.echo_deviation[i]),
                         int(self.return_number[i]), int(self.num_returns[i])))
            for i in range(len(self))
        ]

    @staticmethod
    def from_records(rows: Sequence[tuple[int, PointRecord]]) -> "PointTable":
        n = len(rows)
        t = PointTable(
            segment_id=np.zeros(n, dtype=np.int64),
            x=np.zeros(n), y=np.zeros(n), z=np.zeros(n),
            channel=np.zeros(n, dtype=np.int64),
            reflectance=np.zeros(n), amplitude=np.zeros(n), echo_deviation=np.zeros(n),
            return_number=np.zeros(n, dtype=np.int64), num_returns=np.zeros(n, dtype=np.int64),
        )
        for i, (sid, p) in enumerate(rows):
            t.segment_id[i] = sid
            t.x[i], t.y[i], t.z[i] = p.x, p.y, p.z
            t.channel[i] = p.channel
            t.reflectance[i] = p.reflectance
            t.amplitude[i] = p.amplitude
            t.echo_deviation[i] = p.echo_deviation
            t.return_number[i] = p.return_number
            t.num_returns[i] = p.num_returns
        return t


def _parse_float_field(text: str, what: str, line_no: int) -> float:
    if text == "":
        return float("nan")
    try:
        return float(text)
    except ValueError:
        raise MalformedRow(f"bad {what}: {text!r}", line_no) from None


def _parse_int_field(text: str, what: str, line_no: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise MalformedRow(f"bad {what}: {text!r}", line_no) from None


def parse_points(path: Union[str, Path]) -> PointTable:
    """Read points.csv; raises MalformedRow / InvariantViolation with the
    offending 1-based line number. Row order is preserved."""
    rows: list[list] = []
    header_seen = False
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != POINTS_HEADER:
                    raise MalformedRow(f"expected header {POINTS_HEADER!r}", line_no)
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 10:
                raise MalformedRow(f"expected 10 fields, got {len(parts)}", line_no)
            sid = _parse_int_field(parts[0], "segment_id", line_no)
            x = _parse_float_field(parts[1], "x", line_no)
            y = _parse_float_field(parts[2], "y", line_no)
            z = _parse_float_field(parts[3], "z", line_no)
            channel = _parse_int_field(parts[4], "channel", line_no)
            refl = _parse_float_field(parts[5], "reflectance", line_no)
            amp = _parse_float_field(parts[6], "amplitude", line_no)
            dev = _parse_float_field(parts[7], "echo_deviation", line_no)
            rn = _parse_int_field(parts[8], "return_number", line_no)
            nr = _parse_int_field(parts[9], "num_returns", line_no)
            PointRecord(x, y, z, channel, refl, amp, dev, rn, nr).validate(line_no)
            rows.append([sid, x, y, z, channel, refl, amp, dev, rn, nr])
    if not header_seen:
        raise MalformedRow("missing header", 1)
    if not rows:
        return PointTable.from_records([])
    a = np.array(rows, dtype=np.float64)
    return PointTable(
        segment_id=a[:, 0].astype(np.int64),
        x=a[:, 1], y=a[:, 2], z=a[:, 3],
        channel=a[:, 4].astype(np.int64),
        reflectance=a[:, 5], amplitude=a[:, 6], echo_deviation=a[:, 7],
        return_number=a[:, 8].astype(np.int64), num_returns=a[:, 9].astype(np.int64),
    )


def _fmt(v: float) -> str:
    """Shortest round-trip decimal; empty string for NaN (the NA sentinel)."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if math.isnan(v):
        return ""
    return repr(float(v))


def write_points(path: Union[str, Path], table: PointTable, stamp: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if stamp:
            f.write(f"# {stamp}\n")
        f.write(POINTS_HEADER + "\n")
        for i in range(len(table)):
            f.write(
                f"{int(table.segment_id[i])},{_fmt(table.x[i])},{_fmt(table.y[i])},{_fmt(table.z[i])},"
                f"{int(table.channel[i])},{_fmt(table.reflectance[i])},{_fmt(table.amplitude[i])},"
                f"{_fmt(table.echo_deviation[i])},{int(table.return_number[i])},{int(table.num_returns[i])}\n"
            )


@dataclass(frozen=True)
class LabelRow:
    segment_id: int
    species_code: int
    profile_category: ProfileCategory = ProfileCategory.UNASSIGNED
    crown_class: CrownClass = CrownClass.UNASSIGNED
    split: Split = Split.UNASSIGNED


def _parse_enum(cls, text: str, what: str, line_no: int):
    if text == "":
        return cls.UNASSIGNED
    for member in cls:
        if member.value == text:
            return member
    raise MalformedRow(f"bad {what}: {text!r}", line_no)


def parse_labels(path: Union[str, Path]) -> list[LabelRow]:
    rows: list[LabelRow] = []
    header_seen = False
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != LABELS_HEADER:
                    raise MalformedRow(f"expected header {LABELS_HEADER!r}", line_no)
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise MalformedRow(f"expected 5 fields, got {len(parts)}", line_no)
            sid = _parse_int_field(parts[0], "segment_id", line_no)
            code = _parse_int_field(parts[1], "species_code", line_no)
            try:
                species_from_code(code)
            except Exception:
                raise InvariantViolation(f"invalid species code {code}", line_no) from None
            rows.append(LabelRow(
                sid, code,
                _parse_enum(ProfileCategory, parts[2], "profile_category", line_no),
                _parse_enum(CrownClass, parts[3], "crown_class", line_no),
                _parse_enum(Split, parts[4], "split", line_no),
            ))
    if not header_seen:
        raise MalformedRow("missing header", 1)
    return rows


def write_labels(path: Union[str, Path], rows: Iterable[LabelRow], stamp: Optional[str] = None) -> None:
    def cell(member) -> str:
        return "" if member.name == "UNASSIGNED" else member.value

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if stamp:
            f.write(f"# {stamp}\n")
        f.write(LABELS_HEADER + "\n")
        for r in rows:
            f.write(f"{r.segment_id},{r.species_code},{cell(r.profile_category)},"
                    f"{cell(r.crown_class)},{cell(r.split)}\n")


# ---------------------------------------------------------------------------
# ASCII grids


@dataclass
class AsciiGrid:
    """Row-major raster, row 0 northernmost. Cell (row, col) covers
    x in [xll + col*cs, xll + (col+1)*cs), y in [yll + (nrows-1-row)*cs, ...)."""

    ncols: int
    nrows: int
    xllcorner: float
    yllcorner: float
    cellsize: float
    nodata_value: float
    values: np.ndarray

    def __post_init__(self):
        if self.cellsize <= 0:
            raise ValueError("cellsize must be > 0")
        self.values = np.asarray(self.values)
        if self.values.shape != (self.nrows, self.ncols):
            raise ValueError(f"values shape {self.values.shape} != ({self.nrows}, {self.ncols})")

    def cell_of(self, x, y):
        """(row, col) arrays for world coordinates; may fall outside the grid."""
        col = np.floor((np.asarray(x) - self.xllcorner) / self.cellsize).astype(np.int64)
        row = self.nrows - 1 - np.floor((np.asarray(y) - self.yllcorner) / self.cellsize).astype(np.int64)
        return row, col

    def in_bounds(self, row, col):
        return (row >= 0) & (row < self.nrows) & (col >= 0) & (col < self.ncols)

    def cell_center(self, row, col):
        x = self.xllcorner + (np.asarray(col) + 0.5) * self.cellsize
        y = self.yllcorner + (self.nrows - 1 - np.asarray(row) + 0.5) * self.cellsize
        return x, y


Dtm = AsciiGrid


def read_grid(path: Union[str, Path]) -> AsciiGrid:
    header: dict[str, float] = {}
    rows: list[np.ndarray] = []
    keys = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
    with open(path, "r", encoding="utf-8") as f:
        line_no = 0
        for line in f:
            line_no += 1
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(header) < 6:
                if len(parts) != 2 or parts[0].lower() not in keys:
                    raise MalformedRow(f"bad header line: {line!r}", line_no)
                header[parts[0].lower()] = float(parts[1])
            else:
                rows.append(np.array([float(p) for p in parts]))
    if len(header) < 6:
        raise MalformedRow("incomplete grid header", line_no)
    values = np.concatenate(rows) if rows else np.array([])
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    if values.size != ncols * nrows:
        raise MalformedRow(f"expected {ncols * nrows} values, got {values.size}", line_no)
    return AsciiGrid(ncols, nrows, header["xllcorner"], header["yllcorner"],
                     header["cellsize"], header["nodata_value"],
                     values.reshape(nrows, ncols))


def grid_to_text(grid: AsciiGrid, stamp: Optional[str] = None) -> str:
    as_int = grid.values.dtype.kind in "iu"
    lines = []
    if stamp:
        lines.append(f"# {stamp}")
    lines.append(f"ncols {grid.ncols}")
    lines.append(f"nrows {grid.nrows}")
    lines.append(f"xllcorner {_fmt(float(grid.xllcorner))}")
    lines.append(f"yllcorner {_fmt(float(grid.yllcorner))}")
    lines.append(f"cellsize {_fmt(float(grid.cellsize))}")
    lines.append(f"NODATA_value {_fmt(int(grid.nodata_value) if as_int else float(grid.nodata_value))}")
    for r in range(grid.nrows):
        row = grid.values[r]
        if as_int:
            lines.append(" ".join(str(int(v)) for v in row))
        else:
            lines.append(" ".join(_fmt(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_grid(path: Union[str, Path], grid: AsciiGrid, stamp: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(grid_to_text(grid, stamp))


def grid_extent_for(x: np.ndarray, y: np.ndarray, cellsize: float,
                    origin: Optional[tuple[float, float]] = None) -> tuple[int, int, float, float]:
    """(ncols, nrows, xll, yll) covering all points, origin snapped to cellsize."""
    if origin is None:
        xll = math.floor(x.min() / cellsize) * cellsize
        yll = math.floor(y.min() / cellsize) * cellsize
    else:
        xll, yll = origin
    ncols = int(math.floor((x.max() - xll) / cellsize)) + 1
    nrows = int(math.floor((y.max() - yll) / cellsize)) + 1
    return ncols, nrows, xll, yll


# ---------------------------------------------------------------------------
# Ground / noise classification, DTM, normalization


@dataclass(frozen=True)
class GroundPartition:
    ground: np.ndarray      # boolean masks over the input table
    vegetation: np.ndarray
    noise: np.ndarray


def classify_ground_and_noise(table: PointTable,
                              noise_radius: float = 1.0,
                              noise_min_neighbors: int = 3,
                              ground_cell: float = 1.0,
                              ground_tolerance: float = 0.30) -> GroundPartition:
    """Isolation filter + per-cell minimum ground rule.

    Noise: fewer than `noise_min_neighbors` other points within `noise_radius`
    (3D). Ground: non-noise points within `ground_tolerance` of the lowest
    non-noise point of their `ground_cell` x `ground_cell` cell. Remainder is
    vegetation.
    """
    n = len(table)
    if n == 0:
        raise ValueError("empty point table")
    xyz = np.column_stack([table.x, table.y, table.z])
    tree = cKDTree(xyz)
    counts = tree.query_ball_point(xyz, r=noise_radius, return_length=True)
    noise = (counts - 1) < noise_min_neighbors

    ground = np.zeros(n, dtype=bool)
    ok = ~noise
    if ok.any():
        cx = np.floor(table.x[ok] / ground_cell).astype(np.int64)
        cy = np.floor(table.y[ok] / ground_cell).astype(np.int64)
        key = (cx - cx.min()) * (cy.max() - cy.min() + 1) + (cy - cy.min())
        order = np.argsort(key, kind="stable")
        z = table.z[ok][order]
        uniq, start = np.unique(key[order], return_index=True)
        minima = np.minimum.reduceat(z, start)
        cell_min = np.empty(len(z))
        for s, e, m in zip(start, np.append(start[1:], len(z)), minima):
            cell_min[s:e] = m
        is_ground_sorted = (z - cell_min) <= ground_tolerance
        idx_ok = np.flatnonzero(ok)[order]
        ground[idx_ok[is_ground_sorted]] = True
    vegetation = ~(noise | ground)
    return GroundPartition(ground=ground, vegetation=vegetation, noise=noise)


def build_dtm(x: np.ndarray, y: np.ndarray, z: np.ndarray, cellsize: float = 1.0,
              extent: Optional[tuple[int, int, float, float]] = None) -> Dtm:
    """Grid of per-cell minimum ground elevation; empty cells filled from the
    nearest filled cell."""
    if len(x) == 0:
        raise NoGroundPoints("no ground points")
    if extent is None:
        extent = grid_extent_for(x, y, cellsize)
    ncols, nrows, xll, yll = extent
    grid = AsciiGrid(ncols, nrows, xll, yll, cellsize, -9999.0,
                     np.full((nrows, ncols), np.inf))
    row, col = grid.cell_of(x, y)
    inside = grid.in_bounds(row, col)
    np.minimum.at(grid.values, (row[inside], col[inside]), z[inside])
    empty = ~np.isfinite(grid.values)
    if empty.any():
        if empty.all():
            raise NoGroundPoints("no ground points inside grid extent")
        _, (ri, ci) = ndimage.distance_transform_edt(empty, return_indices=True)
        grid.values = grid.values[ri, ci]
    return grid


def normalize_heights(table: PointTable, dtm: Dtm) -> PointTable:
    """Replace z by height above the DTM cell containing each point; points
    outside the DTM extent use the nearest cell."""
    row, col = dtm.cell_of(table.x, table.y)
    row = np.clip(row, 0, dtm.nrows - 1)
    col = np.clip(col, 0, dtm.ncols - 1)
    out = table.select(np.arange(len(table)))
    out.z = table.z - dtm.values[row, col]
    return out


# ---------------------------------------------------------------------------
# Channel fusion


def fuse_channels(table: PointTable, radius: float = FUSION_RADIUS) -> PointTable:
    """Fill refl_c1..refl_c3: the point's own channel gets its own reflectance;
    the other channels get the reflectance of the nearest point (3D) of that
    channel within `radius`, NaN if none. Equidistant donors: lowest input
    index wins."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    n = len(table)
    xyz = np.column_stack([table.x, table.y, table.z])
    fused = [np.full(n, np.nan) for _ in range(3)]
    for c in (1, 2, 3):
        own = table.channel == c
        fused[c - 1][own] = table.reflectance[own]
        donors = np.flatnonzero(own & np.isfinite(table.reflectance))
        if len(donors) == 0:
            continue
        tree = cKDTree(xyz[donors])
        takers = np.flatnonzero(~own)
        if len(takers) == 0:
            continue
        k = min(2, len(donors))
        dist, nearest = tree.query(xyz[takers], k=k, distance_upper_bound=radius)
        if k == 1:
            dist = dist[:, None]
            nearest = nearest[:, None]
        hit = np.isfinite(dist[:, 0])
        best = np.where(hit, donors[np.minimum(nearest[:, 0], len(donors) - 1)], -1)
        # exact-distance ties: resolve to the lowest input index
        if k == 2:
            tied = hit & np.isfinite(dist[:, 1]) & (dist[:, 0] == dist[:, 1])
            for t in np.flatnonzero(tied):
                ball = tree.query_ball_point(xyz[takers[t]], r=dist[t, 0])
                cand = donors[ball]
                d = np.linalg.norm(xyz[cand] - xyz[takers[t]], axis=1)
                cand = cand[d == d.min()]
                best[t] = cand.min()
        got = best >= 0
        fused[c - 1][takers[got]] = table.reflectance[best[got]]
    out = table.select(np.arange(n))
    out.refl_c1, out.refl_c2, out.refl_c3 = fused
    return out


# ---------------------------------------------------------------------------
# Thinning and subsampling


def voxel_thin(table: PointTable, side: float = 0.05) -> PointTable:
    """Keep at most one point per voxel: the one nearest the voxel centroid,
    ties broken by lowest input index. Output preserves input order."""
    if side <= 0:
        raise ValueError("side must be > 0")
    n = len(table)
    if n == 0:
        return table.select(np.arange(0))
    kx = np.floor(table.x / side).astype(np.int64)
    ky = np.floor(table.y / side).astype(np.int64)
    kz = np.floor(table.z / side).astype(np.int64)
    cx = (kx + 0.5) * side
    cy = (ky + 0.5) * side
    cz = (kz + 0.5) * side
    d2 = (table.x - cx) ** 2 + (table.y - cy) ** 2 + (table.z - cz) ** 2
    idx = np.arange(n)
    order = np.lexsort((idx, d2, kz, ky, kx))
    sk = np.column_stack([kx[order], ky[order], kz[order]])
    first = np.ones(n, dtype=bool)
    first[1:] = np.any(sk[1:] != sk[:-1], axis=1)
    survivors = np.sort(order[first])
    return table.select(survivors)


def subsample_to_density(segment: SegmentCloud, target: float, seed: int,
                         min_points: int = 0) -> SegmentCloud:
    """Uniform subsample (without replacement) to round(target * footprint_area)
    points; keeps everything when the request meets or exceeds what is there."""
    if target <= 0:
        raise ValueError("target density must be > 0")
    n = len(segment)
    want = int(round(target * segment.footprint_area))
    want = max(want, min_points)
    if want >= n:
        return segment
    rng = rng_from(seed, segment.segment_id)
    keep = np.sort(rng.choice(n, size=want, replace=False))
    return segment.with_points(keep)


# ---------------------------------------------------------------------------
# Optional LAS 1.2 importer (converter only; the pipeline never reads LAS)


def read_las_points(path: Union[str, Path], channel: int) -> PointTable:
    """Minimal LAS 1.2 reader (point formats 0-3). Intensity lands in the
    reflectance column without unit conversion; the caller supplies the channel."""
    with open(path, "rb") as f:
        header = f.read(227)
        if header[:4] != b"LASF":
            raise MalformedRow("not a LAS file (missing LASF signature)", 1)
        point_offset = struct.unpack_from("<I", header, 96)[0]
        fmt_id = header[104]
        rec_len = struct.unpack_from("<H", header, 105)[0]
        n_points = struct.unpack_from("<I", header, 107)[0]
        sx, sy, sz, ox, oy, oz = struct.unpack_from("<6d", header, 131)
        if fmt_id > 3:
            raise MalformedRow(f"unsupported LAS point format {fmt_id}", 1)
        f.seek(point_offset)
        raw = f.read(rec_len * n_points)
    xs = np.empty(n_points)
    ys = np.empty(n_points)
    zs = np.empty(n_points)
    intens = np.empty(n_points)
    rn = np.empty(n_points, dtype=np.int64)
    nr = np.empty(n_points, dtype=np.int64)
    for i in range(n_points):
        off = i * rec_len
        xi, yi, zi = struct.unpack_from("<3i", raw, off)
        inten = struct.unpack_from("<H", raw, off + 12)[0]
        flags = raw[off + 14]
        xs[i] = xi * sx + ox
        ys[i] = yi * sy + oy
        zs[i] = zi * sz + oz
        intens[i] = float(inten)
        rn[i] = max(flags & 0b111, 1)
        nr[i] = max((flags >> 3) & 0b111, rn[i])
    n = n_points
    return PointTable(
        segment_id=np.zeros(n, dtype=np.int64),
        x=xs, y=ys, z=zs,
        channel=np.full(n, channel, dtype=np.int64),
        reflectance=intens,
        amplitude=np.full(n, np.nan), echo_deviation=np.full(n, np.nan),
        return_number=rn, num_returns=nr,
    )

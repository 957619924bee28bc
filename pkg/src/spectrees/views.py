"""Depth-view rendering of segment clouds.

Each segment becomes seven 256 x 256 uint8 depth images: four side views at
azimuths 0/45/90/135 degrees, a top view, a bottom view, and a trunk close-up
(side view restricted to 1.0 <= z <= 1.5 m). Background pixels are 0; a lit
pixel encodes the depth of the nearest point at that pixel, scaled so the
closest point is 255 and the farthest lit value is 1.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Union

import numpy as np

from .core import SegmentCloud

IMAGE_SIZE = 256
MARGIN = 0.05  # fraction of the image kept clear on each side
SIDE_AZIMUTHS = (0.0, 45.0, 90.0, 135.0)
TRUNK_SLAB = (1.0, 1.5)  # m, z-range of the trunk close-up
N_VIEWS = 7


def _project(u: np.ndarray, v: np.ndarray, depth: np.ndarray,
             size: int = IMAGE_SIZE) -> np.ndarray:
    """Rasterize (u, v, depth) triples: per pixel keep the smallest depth,
    then map depths linearly to 255 (closest) .. 1 (farthest)."""
    img = np.zeros((size, size), dtype=np.uint8)
    if len(u) == 0:
        return img
    span_u = float(u.max() - u.min())
    span_v = float(v.max() - v.min())
    usable = (size - 1) * (1.0 - 2.0 * MARGIN)
    # spans below 1 nm are rotation round-off (cos(pi/2) != 0), not geometry;
    # stretching them to frame width would smear a degenerate cloud
    scale = usable / max(span_u, span_v) if max(span_u, span_v) > 1e-9 else 1.0
    cu = (u.min() + u.max()) / 2.0
    cv = (v.min() + v.max()) / 2.0
    px = np.rint((u - cu) * scale + (size - 1) / 2.0).astype(np.int64)
    py = np.rint((size - 1) / 2.0 - (v - cv) * scale).astype(np.int64)
    px = np.clip(px, 0, size - 1)
    py = np.clip(py, 0, size - 1)
    nearest = np.full((size, size), np.inf)
    np.minimum.at(nearest, (py, px), depth)
    lit = np.isfinite(nearest)
    dmin = float(depth.min())
    dmax = float(depth.max())
    span = dmax - dmin
    if span > 0:
        rel = (nearest[lit] - dmin) / span
    else:
        rel = np.zeros(int(lit.sum()))
    img[lit] = (1 + np.rint(254.0 * (1.0 - rel))).astype(np.uint8)
    return img


def render_depth_views(segment: SegmentCloud) -> np.ndarray:
    """(7, 256, 256) uint8 stack: sides at 0/45/90/135, top, bottom, trunk."""
    x = segment.x - segment.x.mean()
    y = segment.y - segment.y.mean()
    z = segment.z
    views = np.zeros((N_VIEWS, IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    for i, az in enumerate(SIDE_AZIMUTHS):
        t = math.radians(az)
        xr = x * math.cos(t) + y * math.sin(t)
        yr = -x * math.sin(t) + y * math.cos(t)
        views[i] = _project(xr, z, yr)
    views[4] = _project(x, y, z.max() - z)   # top: highest point closest
    views[5] = _project(x, y, z - z.min())   # bottom: lowest point closest
    slab = (z >= TRUNK_SLAB[0]) & (z <= TRUNK_SLAB[1])
    views[6] = _project(x[slab], z[slab], y[slab])
    return views


def save_depth_views(out_dir: Union[str, Path], segment: SegmentCloud) -> list[Path]:
    """Write seg<id>_view<k>.png for k = 0..6; returns the paths."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    views = render_depth_views(segment)
    paths = []
    for k in range(N_VIEWS):
        p = out_dir / f"seg{segment.segment_id}_view{k}.png"
        Image.fromarray(views[k], mode="L").save(p)
        paths.append(p)
    return paths

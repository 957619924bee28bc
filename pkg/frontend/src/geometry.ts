/** Planar geometry helpers for polygon hit-testing over the segment layer. */

import type { Feature, Segment } from "./types.js";

export function ringBbox(
  ring: Array<[number, number]>,
): [number, number, number, number] {
  let minx = Infinity;
  let miny = Infinity;
  let maxx = -Infinity;
  let maxy = -Infinity;
  for (const [x, y] of ring) {
    if (x < minx) minx = x;
    if (x > maxx) maxx = x;
    if (y < miny) miny = y;
    if (y > maxy) maxy = y;
  }
  return [minx, miny, maxx, maxy];
}

/**
 * Ray-casting point-in-polygon on the outer ring. Points exactly on an edge
 * count as inside (annotators click near boundaries constantly; swallowing
 * those clicks would read as a dead UI).
 */
export function pointInRing(
  x: number,
  y: number,
  ring: Array<[number, number]>,
): boolean {
  let inside = false;
  const n = ring.length;
  for (let i = 0, j = n - 1; i < n; j = i++) {
    const [xi, yi] = ring[i];
    const [xj, yj] = ring[j];
    if (onSegment(x, y, xi, yi, xj, yj)) return true;
    const crosses =
      yi > y !== yj > y && x < ((xj - xi) * (y - yi)) / (yj - yi) + xi;
    if (crosses) inside = !inside;
  }
  return inside;
}

function onSegment(
  px: number,
  py: number,
  ax: number,
  ay: number,
  bx: number,
  by: number,
): boolean {
  const len2 = (bx - ax) ** 2 + (by - ay) ** 2;
  // GeoJSON rings close with a duplicate vertex; that zero-length "edge"
  // must not swallow every point.
  if (len2 === 0) return false;
  const cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  if (Math.abs(cross) > 1e-9) return false;
  const dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay);
  return dot >= 0 && dot <= len2;
}

export function segmentFromFeature(f: Feature): Segment {
  const ring = f.geometry.coordinates[0].map(
    ([x, y]) => [x, y] as [number, number],
  );
  const p = f.properties;
  return {
    id: p.segment_id,
    ring,
    bbox: ringBbox(ring),
    predictedCode: p.predicted_code ?? null,
    disagreement: p.disagreement ?? 0,
    labelCode: p.label_code ?? null,
    labelStatus:
      p.label_status === "verified" || p.label_status === "proposed"
        ? p.label_status
        : null,
  };
}

/**
 * Topmost segment under a world point, bbox prefilter first so a click on a
 * 5000-polygon project stays interactive.
 */
export function hitTest(
  segments: Segment[],
  x: number,
  y: number,
): Segment | null {
  for (let i = segments.length - 1; i >= 0; i--) {
    const s = segments[i];
    const [minx, miny, maxx, maxy] = s.bbox;
    if (x < minx || x > maxx || y < miny || y > maxy) continue;
    if (pointInRing(x, y, s.ring)) return s;
  }
  return null;
}

/** Union bbox of every segment — the project's world extent. */
export function sceneBbox(
  segments: Segment[],
): [number, number, number, number] {
  let [minx, miny, maxx, maxy] = [Infinity, Infinity, -Infinity, -Infinity];
  for (const s of segments) {
    minx = Math.min(minx, s.bbox[0]);
    miny = Math.min(miny, s.bbox[1]);
    maxx = Math.max(maxx, s.bbox[2]);
    maxy = Math.max(maxy, s.bbox[3]);
  }
  return [minx, miny, maxx, maxy];
}

/**
 * Pan/zoom view state: a similarity transform between world metres and
 * canvas pixels. y flips because canvas rows grow downward while northing
 * grows upward.
 */

export const MIN_ZOOM = 0.05; // px per metre
export const MAX_ZOOM = 400;

export class Viewport {
  zoom: number; // pixels per world metre
  panX: number; // world coordinate at canvas (0, 0)
  panY: number;

  constructor(
    public width: number,
    public height: number,
    zoom = 1,
    panX = 0,
    panY = 0,
  ) {
    this.zoom = clampZoom(zoom);
    this.panX = panX;
    this.panY = panY;
  }

  toScreen(wx: number, wy: number): [number, number] {
    return [(wx - this.panX) * this.zoom, (this.panY - wy) * this.zoom];
  }

  toWorld(sx: number, sy: number): [number, number] {
    return [this.panX + sx / this.zoom, this.panY - sy / this.zoom];
  }

  /** Shift the view by a screen-space drag delta. */
  panBy(dxPixels: number, dyPixels: number): void {
    this.panX -= dxPixels / this.zoom;
    this.panY += dyPixels / this.zoom;
  }

  /** Zoom by a factor keeping the world point under (sx, sy) fixed. */
  zoomAt(sx: number, sy: number, factor: number): void {
    const [wx, wy] = this.toWorld(sx, sy);
    this.zoom = clampZoom(this.zoom * factor);
    this.panX = wx - sx / this.zoom;
    this.panY = wy + sy / this.zoom;
  }

  /** Frame a world bbox with a small margin. */
  fit(bbox: [number, number, number, number], marginFrac = 0.05): void {
    const [minx, miny, maxx, maxy] = bbox;
    const spanX = Math.max(maxx - minx, 1e-9);
    const spanY = Math.max(maxy - miny, 1e-9);
    const usable = 1 - 2 * marginFrac;
    this.zoom = clampZoom(
      Math.min((this.width * usable) / spanX, (this.height * usable) / spanY),
    );
    const cx = (minx + maxx) / 2;
    const cy = (miny + maxy) / 2;
    this.panX = cx - this.width / 2 / this.zoom;
    this.panY = cy + this.height / 2 / this.zoom;
  }
}

export function clampZoom(zoom: number): number {
  return Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, zoom));
}

/** Canvas renderer: raster backdrop, segment polygons, selection marker. */

import { gridMax } from "./grid.js";
import { heightColor, speciesColor, type Palette } from "./palette.js";
import type { GridData, Segment } from "./types.js";
import type { Viewport } from "./viewport.js";

export interface SceneLayers {
  basemap: boolean;
  chm: boolean;
  boundaries: boolean;
  labels: boolean;
  disagreement: boolean;
}

export const DEFAULT_LAYERS: SceneLayers = {
  basemap: true,
  chm: true,
  boundaries: true,
  labels: true,
  disagreement: false,
};

/** Pre-render the CHM once at one pixel per cell; pan/zoom just rescales. */
export function chmToCanvas(grid: GridData): HTMLCanvasElement {
  const canvas = document.createElement("canvas");
  canvas.width = grid.ncols;
  canvas.height = grid.nrows;
  const ctx = canvas.getContext("2d");
  if (!ctx) return canvas;
  const vmax = gridMax(grid);
  for (let r = 0; r < grid.nrows; r++) {
    for (let c = 0; c < grid.ncols; c++) {
      const v = grid.values[r * grid.ncols + c];
      ctx.fillStyle =
        v === grid.nodata ? "#102418" : heightColor(v, vmax);
      ctx.fillRect(c, r, 1, 1);
    }
  }
  return canvas;
}

export interface Scene {
  segments: Segment[];
  chm: GridData | null;
  chmCanvas: HTMLCanvasElement | null;
  basemapImage: ImageBitmap | null;
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  scene: Scene,
  view: Viewport,
  palette: Palette,
  layers: SceneLayers,
  selectedId: number | null,
): void {
  ctx.fillStyle = "#16211b";
  ctx.fillRect(0, 0, view.width, view.height);

  if (scene.chm) {
    const g = scene.chm;
    const [sx, sy] = view.toScreen(
      g.xllcorner,
      g.yllcorner + g.nrows * g.cellsize,
    );
    const w = g.ncols * g.cellsize * view.zoom;
    const h = g.nrows * g.cellsize * view.zoom;
    ctx.imageSmoothingEnabled = false;
    if (layers.basemap && scene.basemapImage) {
      ctx.drawImage(scene.basemapImage, sx, sy, w, h);
    } else if (layers.chm && scene.chmCanvas) {
      ctx.drawImage(scene.chmCanvas, sx, sy, w, h);
    }
  }

  for (const s of scene.segments) {
    if (!polygonVisible(s, view)) continue;
    tracePath(ctx, s, view);
    if (layers.labels) {
      ctx.fillStyle = speciesColor(palette, s.labelCode ?? s.predictedCode);
      ctx.globalAlpha = s.labelCode !== null ? 0.45 : 0.2;
      ctx.fill();
      ctx.globalAlpha = 1;
    }
    if (layers.disagreement && s.disagreement > 0) {
      ctx.fillStyle = "#ff1744";
      ctx.globalAlpha = 0.6 * Math.min(1, s.disagreement);
      ctx.fill();
      ctx.globalAlpha = 1;
    }
    if (layers.boundaries) {
      ctx.strokeStyle =
        s.labelStatus === "verified"
          ? palette.verifiedRing
          : s.labelStatus === "proposed"
            ? palette.proposedRing
            : "rgba(255,255,255,0.35)";
      ctx.lineWidth = s.labelStatus ? 1.5 : 0.75;
      ctx.stroke();
    }
  }

  if (selectedId !== null) {
    const s = scene.segments.find((seg) => seg.id === selectedId);
    if (s) {
      tracePath(ctx, s, view);
      ctx.strokeStyle = palette.selection;
      ctx.lineWidth = 2.5;
      ctx.stroke();
    }
  }
}

function polygonVisible(s: Segment, view: Viewport): boolean {
  const [minx, miny, maxx, maxy] = s.bbox;
  const [left, top] = view.toScreen(minx, maxy);
  const [right, bottom] = view.toScreen(maxx, miny);
  return right >= 0 && left <= view.width && bottom >= 0 && top <= view.height;
}

function tracePath(
  ctx: CanvasRenderingContext2D,
  s: Segment,
  view: Viewport,
): void {
  ctx.beginPath();
  s.ring.forEach(([wx, wy], i) => {
    const [x, y] = view.toScreen(wx, wy);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.closePath();
}

/** Parser for the ASCII grid text served at /api/chm.grid. */

import type { GridData } from "./types.js";

const HEADER_KEYS = [
  "ncols",
  "nrows",
  "xllcorner",
  "yllcorner",
  "cellsize",
  "nodata_value",
] as const;

export function parseGrid(text: string): GridData {
  const lines = text
    .split("\n")
    .map((l) => l.trim())
    .filter((l) => l.length > 0 && !l.startsWith("#"));
  const header: Record<string, number> = {};
  let row = 0;
  for (; row < lines.length; row++) {
    const parts = lines[row].split(/\s+/);
    const key = parts[0].toLowerCase();
    if (!(HEADER_KEYS as readonly string[]).includes(key)) break;
    header[key] = Number(parts[1]);
  }
  for (const key of ["ncols", "nrows", "cellsize"]) {
    if (!Number.isFinite(header[key])) {
      throw new Error(`grid header missing ${key}`);
    }
  }
  const ncols = header.ncols;
  const nrows = header.nrows;
  const nodata = header.nodata_value ?? -9999;
  const values = new Float32Array(ncols * nrows);
  const dataLines = lines.slice(row);
  if (dataLines.length !== nrows) {
    throw new Error(`expected ${nrows} data rows, got ${dataLines.length}`);
  }
  for (let r = 0; r < nrows; r++) {
    const cells = dataLines[r].split(/\s+/);
    if (cells.length !== ncols) {
      throw new Error(`row ${r}: expected ${ncols} columns, got ${cells.length}`);
    }
    for (let c = 0; c < ncols; c++) {
      const v = Number(cells[c]);
      if (Number.isNaN(v)) throw new Error(`row ${r}: bad value '${cells[c]}'`);
      values[r * ncols + c] = v;
    }
  }
  return {
    ncols,
    nrows,
    xllcorner: header.xllcorner ?? 0,
    yllcorner: header.yllcorner ?? 0,
    cellsize: header.cellsize,
    nodata,
    values,
  };
}

/** Grid value at a world coordinate; null off-grid or nodata. */
export function sampleGrid(grid: GridData, x: number, y: number): number | null {
  const col = Math.floor((x - grid.xllcorner) / grid.cellsize);
  // row 0 is the northern edge
  const row = Math.floor(
    (grid.yllcorner + grid.nrows * grid.cellsize - y) / grid.cellsize,
  );
  if (col < 0 || col >= grid.ncols || row < 0 || row >= grid.nrows) return null;
  const v = grid.values[row * grid.ncols + col];
  return v === grid.nodata ? null : v;
}

export function gridMax(grid: GridData): number {
  let max = 0;
  for (const v of grid.values) {
    if (v !== grid.nodata && v > max) max = v;
  }
  return max;
}

import { describe, expect, it } from "vitest";

import { gridMax, parseGrid, sampleGrid } from "../src/grid.js";

// byte-for-byte the format the service emits at /api/chm.grid
const GRID_TEXT = `# deadbeef1234 seed=1
ncols 3
nrows 2
xllcorner 10.0
yllcorner 20.0
cellsize 0.5
NODATA_value -9999.0
1.0 2.0 -9999.0
4.5 5.25 6.0
`;

describe("parseGrid", () => {
  it("parses header, stamp comment, and row-major values", () => {
    const g = parseGrid(GRID_TEXT);
    expect(g.ncols).toBe(3);
    expect(g.nrows).toBe(2);
    expect(g.xllcorner).toBe(10.0);
    expect(g.yllcorner).toBe(20.0);
    expect(g.cellsize).toBe(0.5);
    expect(g.nodata).toBe(-9999.0);
    expect(Array.from(g.values)).toEqual([1.0, 2.0, -9999.0, 4.5, 5.25, 6.0]);
  });

  it("rejects a missing header field", () => {
    expect(() => parseGrid("nrows 2\ncellsize 1\n0 0\n0 0\n")).toThrow(
      /ncols/,
    );
  });

  it("rejects wrong row and column counts", () => {
    const short = GRID_TEXT.split("\n").slice(0, -2).join("\n") + "\n";
    expect(() => parseGrid(short)).toThrow(/data rows/);
    expect(() => parseGrid(GRID_TEXT.replace("4.5 5.25 6.0", "4.5 5.25"))).toThrow(
      /columns/,
    );
  });

  it("rejects non-numeric cells", () => {
    expect(() => parseGrid(GRID_TEXT.replace("5.25", "oops"))).toThrow(
      /bad value/,
    );
  });
});

describe("sampleGrid", () => {
  const g = parseGrid(GRID_TEXT);

  it("maps world coordinates to the right cell (row 0 = north)", () => {
    // grid spans x [10, 11.5), y [20, 21); top row is y in [20.5, 21)
    expect(sampleGrid(g, 10.25, 20.75)).toBe(1.0);
    expect(sampleGrid(g, 10.75, 20.75)).toBe(2.0);
    expect(sampleGrid(g, 10.25, 20.25)).toBe(4.5);
    expect(sampleGrid(g, 11.25, 20.25)).toBe(6.0);
  });

  it("returns null for nodata and off-grid points", () => {
    expect(sampleGrid(g, 11.25, 20.75)).toBeNull(); // nodata cell
    expect(sampleGrid(g, 9.9, 20.5)).toBeNull();
    expect(sampleGrid(g, 10.5, 21.5)).toBeNull();
  });

  it("ignores nodata when finding the maximum", () => {
    expect(gridMax(g)).toBe(6.0);
  });
});

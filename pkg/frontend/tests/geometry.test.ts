import { describe, expect, it } from "vitest";

import {
  hitTest,
  pointInRing,
  ringBbox,
  sceneBbox,
  segmentFromFeature,
} from "../src/geometry.js";
import type { Feature } from "../src/types.js";

function square(
  id: number,
  x0: number,
  y0: number,
  side = 4,
  props: Record<string, unknown> = {},
): Feature {
  return {
    type: "Feature",
    properties: { segment_id: id, ...props },
    geometry: {
      type: "Polygon",
      coordinates: [
        [
          [x0, y0],
          [x0 + side, y0],
          [x0 + side, y0 + side],
          [x0, y0 + side],
          [x0, y0],
        ],
      ],
    },
  };
}

describe("pointInRing", () => {
  const ring: Array<[number, number]> = [
    [0, 0],
    [10, 0],
    [10, 10],
    [0, 10],
    [0, 0],
  ];

  it("accepts interior points and rejects exterior ones", () => {
    expect(pointInRing(5, 5, ring)).toBe(true);
    expect(pointInRing(0.01, 9.99, ring)).toBe(true);
    expect(pointInRing(-0.01, 5, ring)).toBe(false);
    expect(pointInRing(5, 10.01, ring)).toBe(false);
  });

  it("counts boundary and vertex clicks as inside", () => {
    expect(pointInRing(5, 0, ring)).toBe(true);
    expect(pointInRing(10, 10, ring)).toBe(true);
    expect(pointInRing(0, 5, ring)).toBe(true);
  });

  it("handles a concave ring", () => {
    // L-shape: the notch at top-right is outside
    const ell: Array<[number, number]> = [
      [0, 0],
      [10, 0],
      [10, 5],
      [5, 5],
      [5, 10],
      [0, 10],
      [0, 0],
    ];
    expect(pointInRing(2, 8, ell)).toBe(true);
    expect(pointInRing(8, 8, ell)).toBe(false);
    expect(pointInRing(8, 2, ell)).toBe(true);
  });
});

describe("segmentFromFeature", () => {
  it("maps properties and computes the bbox", () => {
    const s = segmentFromFeature(
      square(17, 2, 3, 4, {
        predicted_code: 5,
        disagreement: 0.4,
        label_code: 2,
        label_status: "verified",
      }),
    );
    expect(s.id).toBe(17);
    expect(s.bbox).toEqual([2, 3, 6, 7]);
    expect(s.predictedCode).toBe(5);
    expect(s.disagreement).toBeCloseTo(0.4);
    expect(s.labelCode).toBe(2);
    expect(s.labelStatus).toBe("verified");
  });

  it("defaults missing enrichment to null/zero", () => {
    const s = segmentFromFeature(square(1, 0, 0));
    expect(s.predictedCode).toBeNull();
    expect(s.disagreement).toBe(0);
    expect(s.labelCode).toBeNull();
    expect(s.labelStatus).toBeNull();
  });
});

describe("hitTest", () => {
  it("selects the polygon containing the point", () => {
    const segs = [square(1, 0, 0), square(2, 10, 0), square(3, 20, 0)].map(
      segmentFromFeature,
    );
    expect(hitTest(segs, 12, 2)?.id).toBe(2);
    expect(hitTest(segs, 7, 2)).toBeNull();
  });

  it("prefers the topmost (last drawn) of overlapping polygons", () => {
    const segs = [square(1, 0, 0, 6), square(2, 3, 3, 6)].map(
      segmentFromFeature,
    );
    expect(hitTest(segs, 4, 4)?.id).toBe(2);
    expect(hitTest(segs, 1, 1)?.id).toBe(1);
  });

  it("computes the union scene bbox", () => {
    const segs = [square(1, -5, 2), square(2, 30, 20)].map(segmentFromFeature);
    expect(sceneBbox(segs)).toEqual([-5, 2, 34, 24]);
  });
});

describe("5000-polygon fixture", () => {
  it("builds and hit-tests a large project interactively", () => {
    const features: Feature[] = [];
    for (let i = 0; i < 5000; i++) {
      const gx = (i % 71) * 6;
      const gy = Math.floor(i / 71) * 6;
      features.push(square(i + 1, gx, gy, 5));
    }
    const t0 = performance.now();
    const segs = features.map(segmentFromFeature);
    // a pan frame re-tests the cursor, so hit-testing must stay cheap
    for (let q = 0; q < 200; q++) {
      const id = (q * 25) % 5000;
      const [minx, miny] = segs[id].bbox;
      expect(hitTest(segs, minx + 2.5, miny + 2.5)?.id).toBe(id + 1);
    }
    const elapsed = performance.now() - t0;
    expect(segs.length).toBe(5000);
    expect(elapsed).toBeLessThan(1000);
  });

  it("misses between polygons even in the large project", () => {
    const features: Feature[] = [];
    for (let i = 0; i < 5000; i++) {
      features.push(square(i + 1, (i % 71) * 6, Math.floor(i / 71) * 6, 5));
    }
    const segs = features.map(segmentFromFeature);
    expect(hitTest(segs, 5.5, 2.5)).toBeNull(); // in the 1 m gap
  });
});

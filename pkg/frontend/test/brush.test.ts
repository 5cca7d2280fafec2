import { describe, expect, it } from "vitest";

import { Point, strokePixels } from "../src/brush.js";
import { randInt, rng } from "./util.js";

/** Independent rasterizer: brute-force distance from every pixel center. */
function oracle(path: Point[], radius: number, width: number, height: number): number[] {
  const distToSegment = (px: number, py: number, a: Point, b: Point) => {
    const dx = b.x - a.x;
    const dy = b.y - a.y;
    const lenSq = dx * dx + dy * dy;
    const t = lenSq > 0 ? Math.max(0, Math.min(1, ((px - a.x) * dx + (py - a.y) * dy) / lenSq)) : 0;
    return Math.hypot(a.x + t * dx - px, a.y + t * dy - py);
  };
  const hit = new Set<number>();
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let s = 0; s < Math.max(1, path.length - 1); s++) {
        const a = path[s];
        const b = path[Math.min(s + 1, path.length - 1)];
        if (distToSegment(x, y, a, b) <= radius) {
          hit.add(y * width + x);
          break;
        }
      }
    }
  }
  for (const p of path) {
    const x = Math.round(p.x);
    const y = Math.round(p.y);
    if (x >= 0 && x < width && y >= 0 && y < height) hit.add(y * width + x);
  }
  return [...hit].sort((u, v) => u - v);
}

describe("strokePixels", () => {
  it("marks exactly one pixel for a radius-0 click on a pixel center", () => {
    const hit = strokePixels([{ x: 3, y: 5 }], 0, 10, 10);
    expect(Array.from(hit)).toEqual([5 * 10 + 3]);
  });

  it("marks exactly one pixel for a radius-0 click between centers", () => {
    const hit = strokePixels([{ x: 2.4, y: 3.6 }], 0, 10, 10);
    expect(Array.from(hit)).toEqual([4 * 10 + 2]);
  });

  it("stamps a centered disk", () => {
    const hit = strokePixels([{ x: 4, y: 4 }], 2, 9, 9);
    const expected: number[] = [];
    for (let y = 0; y < 9; y++) {
      for (let x = 0; x < 9; x++) {
        if ((x - 4) ** 2 + (y - 4) ** 2 <= 4) expected.push(y * 9 + x);
      }
    }
    expect(Array.from(hit)).toEqual(expected);
    expect(hit.length).toBe(13); // rows of 1, 3, 5, 3, 1 pixels
  });

  it("covers a capsule along a segment", () => {
    const hit = strokePixels([{ x: 2, y: 3 }, { x: 8, y: 3 }], 1, 12, 7);
    expect(Array.from(hit)).toEqual(oracle([{ x: 2, y: 3 }, { x: 8, y: 3 }], 1, 12, 7));
    // Row y=3 from x=1..9 and rows y=2,4 from x=2..8.
    expect(hit.length).toBe(9 + 7 + 7);
  });

  it("clips to the image bounds", () => {
    const hit = strokePixels([{ x: 0, y: 0 }], 3, 5, 5);
    for (const i of hit) {
      expect(i).toBeGreaterThanOrEqual(0);
      expect(i).toBeLessThan(25);
    }
    expect(Array.from(hit)).toEqual(oracle([{ x: 0, y: 0 }], 3, 5, 5));
  });

  it("handles paths that wander outside the image", () => {
    const path = [{ x: -4, y: 2 }, { x: 9, y: 2 }];
    expect(Array.from(strokePixels(path, 1.5, 6, 6))).toEqual(oracle(path, 1.5, 6, 6));
  });

  it("returns ascending unique indices", () => {
    const hit = strokePixels([{ x: 1, y: 1 }, { x: 6, y: 4 }, { x: 2, y: 6 }], 2.2, 9, 9);
    for (let i = 1; i < hit.length; i++) {
      expect(hit[i]).toBeGreaterThan(hit[i - 1]);
    }
  });

  it("matches the brute-force oracle on random strokes", () => {
    const r = rng(20);
    for (let trial = 0; trial < 50; trial++) {
      const width = randInt(r, 3, 24);
      const height = randInt(r, 3, 17);
      const nPoints = randInt(r, 1, 4);
      const path = Array.from({ length: nPoints }, () => ({
        x: r() * (width + 4) - 2,
        y: r() * (height + 4) - 2,
      }));
      const radius = r() * 4;
      const got = Array.from(strokePixels(path, radius, width, height));
      expect(got).toEqual(oracle(path, radius, width, height));
    }
  });

  it("rejects empty paths, bad radii and non-finite points", () => {
    expect(() => strokePixels([], 1, 5, 5)).toThrow(/at least one point/);
    expect(() => strokePixels([{ x: 1, y: 1 }], -1, 5, 5)).toThrow(/radius/);
    expect(() => strokePixels([{ x: 1, y: 1 }], Number.NaN, 5, 5)).toThrow(/radius/);
    expect(() => strokePixels([{ x: Number.NaN, y: 1 }], 1, 5, 5)).toThrow(/non-finite/);
  });
});

/** Stroke rasterization: which pixels a brush pass over a polyline touches. */

export interface Point {
  x: number;
  y: number;
}

export interface BrushState {
  /** Brush radius in image pixels; 0 paints single pixels. */
  radius: number;
  mode: "paint" | "erase";
}

function distSqToSegment(px: number, py: number, ax: number, ay: number, bx: number, by: number): number {
  const dx = bx - ax;
  const dy = by - ay;
  const lenSq = dx * dx + dy * dy;
  let t = 0;
  if (lenSq > 0) {
    t = ((px - ax) * dx + (py - ay) * dy) / lenSq;
    t = Math.max(0, Math.min(1, t));
  }
  const cx = ax + t * dx - px;
  const cy = ay + t * dy - py;
  return cx * cx + cy * cy;
}

/**
 * Flat indices (ascending) of every pixel within `radius` of the polyline
 * through `path`, measuring from pixel centers at integer coordinates.
 *
 * The pixel nearest each path vertex is always included, so a single click
 * at radius 0 marks exactly one pixel even when the pointer position lands
 * between pixel centers.
 */
export function strokePixels(path: Point[], radius: number, width: number, height: number): Uint32Array {
  if (path.length === 0) {
    throw new Error("stroke path must contain at least one point");
  }
  if (!(radius >= 0) || !Number.isFinite(radius)) {
    throw new Error(`brush radius must be a finite number >= 0, got ${radius}`);
  }
  for (const p of path) {
    if (!Number.isFinite(p.x) || !Number.isFinite(p.y)) {
      throw new Error(`stroke path contains a non-finite point (${p.x}, ${p.y})`);
    }
  }

  const hit = new Set<number>();
  const rSq = radius * radius;

  for (let s = 0; s < Math.max(1, path.length - 1); s++) {
    const a = path[s];
    const b = path[Math.min(s + 1, path.length - 1)];
    const x0 = Math.max(0, Math.ceil(Math.min(a.x, b.x) - radius));
    const x1 = Math.min(width - 1, Math.floor(Math.max(a.x, b.x) + radius));
    const y0 = Math.max(0, Math.ceil(Math.min(a.y, b.y) - radius));
    const y1 = Math.min(height - 1, Math.floor(Math.max(a.y, b.y) + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        if (distSqToSegment(x, y, a.x, a.y, b.x, b.y) <= rSq) {
          hit.add(y * width + x);
        }
      }
    }
  }

  for (const p of path) {
    const x = Math.round(p.x);
    const y = Math.round(p.y);
    if (x >= 0 && x < width && y >= 0 && y < height) {
      hit.add(y * width + x);
    }
  }

  return Uint32Array.from([...hit].sort((u, v) => u - v));
}

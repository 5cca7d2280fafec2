import { describe, expect, it } from "vitest";

import { strokePixels } from "../src/brush.js";
import { decodeGrayscalePng, encodeGrayscalePng } from "../src/png.js";
import { AnnotationSession, maskFileName, PngError } from "../src/session.js";
import { imageToScreen, renderToRgba, screenToImage, windowLevel } from "../src/view.js";
import { ihdr, pngChunk, pngFile, rng } from "./util.js";

async function sessionFromRandomImage(width: number, height: number, seed: number): Promise<AnnotationSession> {
  const r = rng(seed);
  const pixels = Uint16Array.from({ length: width * height }, () => Math.floor(r() * 65536));
  const bytes = await encodeGrayscalePng(width, height, pixels, 16);
  return AnnotationSession.fromPng(bytes, "proj.png");
}

describe("AnnotationSession.fromPng", () => {
  it("opens a 16-bit projection with an empty mask of the same size", async () => {
    const session = await sessionFromRandomImage(14, 9, 5);
    expect(session.width).toBe(14);
    expect(session.height).toBe(9);
    expect(session.bitDepth).toBe(16);
    expect(session.mask.width).toBe(session.width);
    expect(session.mask.height).toBe(session.height);
    expect(session.mask.popcount()).toBe(0);
    expect(session.undoDepth).toBe(0);
    expect(session.redoDepth).toBe(0);
  });

  it("propagates decoder errors for corrupt input", async () => {
    await expect(AnnotationSession.fromPng(Uint8Array.of(1, 2, 3), "x.png")).rejects.toThrow(PngError);
  });

  it("refuses color images", async () => {
    const file = pngFile([pngChunk("IHDR", ihdr(2, 2, 8, 6)), pngChunk("IEND", new Uint8Array(0))]);
    await expect(AnnotationSession.fromPng(file, "x.png")).rejects.toThrow(/not a grayscale/);
  });
});

describe("painting and erasing", () => {
  it("paints the pixels the brush touches", async () => {
    const session = await sessionFromRandomImage(16, 12, 6);
    session.brush = { radius: 2, mode: "paint" };
    session.paintStroke([{ x: 5, y: 5 }, { x: 10, y: 7 }]);
    const expected = Array.from(strokePixels([{ x: 5, y: 5 }, { x: 10, y: 7 }], 2, 16, 12));
    expect(session.mask.setIndices()).toEqual(expected);
  });

  it("erasing the same stroke leaves an empty mask", async () => {
    const session = await sessionFromRandomImage(16, 12, 7);
    const path = [{ x: 3.2, y: 4.7 }, { x: 11.9, y: 8.1 }, { x: 6, y: 10 }];
    session.paintStroke(path, { radius: 2.5, mode: "paint" });
    expect(session.mask.popcount()).toBeGreaterThan(0);
    session.paintStroke(path, { radius: 2.5, mode: "erase" });
    expect(session.mask.popcount()).toBe(0);
  });

  it("records one undo entry per stroke, even a no-op one", async () => {
    const session = await sessionFromRandomImage(8, 8, 8);
    session.paintStroke([{ x: 4, y: 4 }], { radius: 1, mode: "paint" });
    const second = session.paintStroke([{ x: 4, y: 4 }], { radius: 1, mode: "paint" });
    expect(session.undoDepth).toBe(2);
    expect(second.changed.length).toBe(0);
  });

  it("erase on an empty mask changes nothing", async () => {
    const session = await sessionFromRandomImage(8, 8, 9);
    session.paintStroke([{ x: 2, y: 2 }, { x: 6, y: 6 }], { radius: 2, mode: "erase" });
    expect(session.mask.popcount()).toBe(0);
    expect(session.undoDepth).toBe(1);
  });
});

describe("undo and redo", () => {
  it("undo restores the previous mask bit-exactly", async () => {
    const session = await sessionFromRandomImage(20, 15, 10);
    session.paintStroke([{ x: 4, y: 4 }, { x: 15, y: 10 }], { radius: 3, mode: "paint" });
    const afterFirst = session.mask.snapshot();
    session.paintStroke([{ x: 10, y: 2 }, { x: 10, y: 12 }], { radius: 2, mode: "erase" });
    expect(session.undo()).toBe(true);
    expect(session.mask.equals(afterFirst)).toBe(true);
    expect(session.undo()).toBe(true);
    expect(session.mask.popcount()).toBe(0);
    expect(session.undo()).toBe(false);
  });

  it("undo then redo restores the later mask bit-exactly", async () => {
    const session = await sessionFromRandomImage(20, 15, 11);
    session.paintStroke([{ x: 4, y: 4 }, { x: 15, y: 10 }], { radius: 3, mode: "paint" });
    session.paintStroke([{ x: 8, y: 8 }], { radius: 4, mode: "erase" });
    const final = session.mask.snapshot();
    session.undo();
    session.undo();
    expect(session.redo()).toBe(true);
    expect(session.redo()).toBe(true);
    expect(session.redo()).toBe(false);
    expect(session.mask.equals(final)).toBe(true);
  });

  it("a fresh stroke clears the redo stack", async () => {
    const session = await sessionFromRandomImage(12, 12, 12);
    session.paintStroke([{ x: 3, y: 3 }], { radius: 2, mode: "paint" });
    session.paintStroke([{ x: 8, y: 8 }], { radius: 2, mode: "paint" });
    session.undo();
    expect(session.redoDepth).toBe(1);
    session.paintStroke([{ x: 5, y: 9 }], { radius: 1, mode: "paint" });
    expect(session.redoDepth).toBe(0);
    expect(session.redo()).toBe(false);
  });
});

describe("mask export", () => {
  it("writes an 8-bit PNG with 255 at set pixels and 0 elsewhere", async () => {
    const session = await sessionFromRandomImage(18, 11, 13);
    session.paintStroke([{ x: 2, y: 2 }, { x: 14, y: 8 }], { radius: 1.8, mode: "paint" });
    const bytes = await session.exportMask();
    const decoded = await decodeGrayscalePng(bytes);
    expect(decoded.width).toBe(session.width);
    expect(decoded.height).toBe(session.height);
    expect(decoded.bitDepth).toBe(8);
    const setPixels: number[] = [];
    for (let i = 0; i < decoded.pixels.length; i++) {
      expect([0, 255]).toContain(decoded.pixels[i]);
      if (decoded.pixels[i] === 255) setPixels.push(i);
    }
    expect(setPixels).toEqual(session.mask.setIndices());
  });

  it("round trips through its own decoder after undo/redo churn", async () => {
    const session = await sessionFromRandomImage(10, 10, 14);
    session.paintStroke([{ x: 5, y: 5 }], { radius: 3, mode: "paint" });
    session.paintStroke([{ x: 5, y: 5 }], { radius: 1, mode: "erase" });
    session.undo();
    session.redo();
    const decoded = await decodeGrayscalePng(await session.exportMask());
    const fromPng: number[] = [];
    for (let i = 0; i < decoded.pixels.length; i++) {
      if (decoded.pixels[i] !== 0) fromPng.push(i);
    }
    expect(fromPng).toEqual(session.mask.setIndices());
  });

  it("names the file after the input image", () => {
    expect(maskFileName("mip.png")).toBe("mip-mask.png");
    expect(maskFileName("Scan 3.PNG")).toBe("Scan 3-mask.png");
    expect(maskFileName("projection")).toBe("projection-mask.png");
  });
});

describe("view state stays out of the data path", () => {
  it("window/level and zoom do not change the exported mask", async () => {
    const session = await sessionFromRandomImage(9, 9, 15);
    session.paintStroke([{ x: 4, y: 4 }], { radius: 2, mode: "paint" });
    const before = await decodeGrayscalePng(await session.exportMask());
    session.view = { zoom: 7.5, panX: -40, panY: 12, windowCenter: 1000, windowWidth: 50 };
    const after = await decodeGrayscalePng(await session.exportMask());
    expect(Array.from(after.pixels)).toEqual(Array.from(before.pixels));
  });

  it("windowLevel clamps and maps the window linearly", () => {
    expect(windowLevel(0, 32768, 65536)).toBe(0);
    expect(windowLevel(65535, 32768, 65536)).toBe(255);
    expect(windowLevel(32768, 32768, 65536)).toBe(128);
    expect(windowLevel(0, 1000, 100)).toBe(0); // below the window
    expect(windowLevel(5000, 1000, 100)).toBe(255); // above it
  });

  it("screen and image coordinates invert each other", () => {
    const view = { zoom: 2.5, panX: 13, panY: -4, windowCenter: 0, windowWidth: 1 };
    const p = screenToImage(view, 100, 60);
    const q = imageToScreen(view, p.x, p.y);
    expect(q.x).toBeCloseTo(100, 10);
    expect(q.y).toBeCloseTo(60, 10);
  });

  it("renders masked pixels red and unmasked gray", async () => {
    const session = await sessionFromRandomImage(4, 4, 16);
    session.paintStroke([{ x: 0, y: 0 }], { radius: 0, mode: "paint" });
    const rgba = renderToRgba(session.image, session.mask, session.view);
    expect(rgba[0]).toBe(255); // masked: full red
    expect(rgba[1]).toBeLessThanOrEqual(rgba[0]);
    const g = rgba[4 * 5]; // pixel (1,1) is unmasked: r == g == b
    expect(rgba[4 * 5 + 1]).toBe(g);
    expect(rgba[4 * 5 + 2]).toBe(g);
    expect(rgba[4 * 5 + 3]).toBe(255);
  });
});

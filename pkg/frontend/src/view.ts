/** Display helpers: window/level mapping and screen/image coordinates. */

import { MaskLayer } from "./mask.js";
import { ViewState } from "./session.js";

/** Map a raw intensity to a 0..255 display value for the given window. */
export function windowLevel(value: number, center: number, width: number): number {
  const w = Math.max(width, 1e-9);
  const lo = center - w / 2;
  const t = (value - lo) / w;
  return Math.max(0, Math.min(255, Math.round(t * 255)));
}

/**
 * Compose the projection image and mask into RGBA display pixels. Masked
 * pixels keep their windowed brightness in the red channel and drop the
 * others, which reads as a red overlay without hiding the vessel signal.
 */
export function renderToRgba(
  image: Uint16Array,
  mask: MaskLayer,
  view: ViewState,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(image.length * 4);
  for (let i = 0; i < image.length; i++) {
    const g = windowLevel(image[i], view.windowCenter, view.windowWidth);
    const masked = mask.data[i] !== 0;
    out[4 * i] = masked ? 255 : g;
    out[4 * i + 1] = masked ? g >> 2 : g;
    out[4 * i + 2] = masked ? g >> 2 : g;
    out[4 * i + 3] = 255;
  }
  return out;
}

export function screenToImage(view: ViewState, sx: number, sy: number): { x: number; y: number } {
  return { x: (sx - view.panX) / view.zoom, y: (sy - view.panY) / view.zoom };
}

export function imageToScreen(view: ViewState, ix: number, iy: number): { x: number; y: number } {
  return { x: ix * view.zoom + view.panX, y: iy * view.zoom + view.panY };
}

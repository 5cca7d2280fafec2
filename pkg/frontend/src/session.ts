/** Annotation session: one projection image, one mask, and its edit history. */

import { BrushState, Point, strokePixels } from "./brush.js";
import { MaskLayer } from "./mask.js";
import { decodeGrayscalePng, encodeGrayscalePng, PngError } from "./png.js";

/**
 * One stroke's effect on the mask. `value` is what the stroke wrote and
 * `changed` the flat indices that actually flipped, so undo writes the
 * opposite value back at exactly those pixels.
 */
export interface StrokeDelta {
  value: 0 | 1;
  changed: Uint32Array;
}

/** Display-only state; never affects the mask or its export. */
export interface ViewState {
  zoom: number;
  panX: number;
  panY: number;
  windowCenter: number;
  windowWidth: number;
}

/** Mask files are named after the image they annotate. */
export function maskFileName(inputName: string): string {
  const stem = inputName.toLowerCase().endsWith(".png") ? inputName.slice(0, -4) : inputName;
  return `${stem}-mask.png`;
}

export class AnnotationSession {
  readonly width: number;
  readonly height: number;
  readonly bitDepth: 8 | 16;
  /** Projection intensities, row-major. */
  readonly image: Uint16Array;
  readonly inputName: string;
  readonly mask: MaskLayer;
  brush: BrushState;
  view: ViewState;

  private undoStack: StrokeDelta[] = [];
  private redoStack: StrokeDelta[] = [];

  private constructor(width: number, height: number, bitDepth: 8 | 16, image: Uint16Array, inputName: string) {
    this.width = width;
    this.height = height;
    this.bitDepth = bitDepth;
    this.image = image;
    this.inputName = inputName;
    this.mask = new MaskLayer(width, height);
    this.brush = { radius: 4, mode: "paint" };
    const full = bitDepth === 16 ? 65536 : 256;
    this.view = { zoom: 1, panX: 0, panY: 0, windowCenter: full / 2, windowWidth: full };
  }

  /** Open a grayscale projection PNG with an empty mask over it. */
  static async fromPng(bytes: Uint8Array, inputName: string): Promise<AnnotationSession> {
    const png = await decodeGrayscalePng(bytes);
    return new AnnotationSession(png.width, png.height, png.bitDepth, png.pixels, inputName);
  }

  /** Blank image of the given size; used by tests and for scratch canvases. */
  static blank(width: number, height: number, inputName = "untitled.png"): AnnotationSession {
    return new AnnotationSession(width, height, 16, new Uint16Array(width * height), inputName);
  }

  /**
   * Apply one brush stroke along `path` and record it as a single undo
   * entry. Painting sets every pixel within the brush radius of the path,
   * erasing clears them; pixels already at the target value still belong to
   * the stroke but contribute nothing to its delta.
   */
  paintStroke(path: Point[], brush: BrushState = this.brush): StrokeDelta {
    const value: 0 | 1 = brush.mode === "erase" ? 0 : 1;
    const touched = strokePixels(path, brush.radius, this.width, this.height);
    const changed = this.mask.apply(touched, value);
    const delta: StrokeDelta = { value, changed };
    this.undoStack.push(delta);
    this.redoStack.length = 0;
    return delta;
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  get redoDepth(): number {
    return this.redoStack.length;
  }

  /** Revert the most recent stroke; returns false when nothing is left. */
  undo(): boolean {
    const delta = this.undoStack.pop();
    if (!delta) return false;
    this.mask.restore(delta.changed, delta.value === 1 ? 0 : 1);
    this.redoStack.push(delta);
    return true;
  }

  /** Reapply the most recently undone stroke. */
  redo(): boolean {
    const delta = this.redoStack.pop();
    if (!delta) return false;
    this.mask.restore(delta.changed, delta.value);
    this.undoStack.push(delta);
    return true;
  }

  /** The mask as an 8-bit grayscale PNG, 255 for vessel and 0 elsewhere. */
  async exportMask(): Promise<Uint8Array> {
    const samples = new Uint8Array(this.mask.data.length);
    for (let i = 0; i < samples.length; i++) {
      samples[i] = this.mask.data[i] !== 0 ? 255 : 0;
    }
    return encodeGrayscalePng(this.width, this.height, samples, 8);
  }

  maskFileName(): string {
    return maskFileName(this.inputName);
  }
}

export { PngError };

/** Binary mask over the annotated image, one byte per pixel (0 or 1). */

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array;

  constructor(width: number, height: number) {
    if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
      throw new Error(`mask dimensions must be positive integers, got ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
  }

  get(x: number, y: number): boolean {
    return this.data[y * this.width + x] !== 0;
  }

  /**
   * Write `value` at the given flat indices and return the indices that
   * actually changed. The returned list is what an undo entry stores: every
   * changed pixel previously held the opposite value, so flipping back is
   * exact.
   */
  apply(indices: Uint32Array, value: 0 | 1): Uint32Array {
    const changed: number[] = [];
    for (const i of indices) {
      if (this.data[i] !== value) {
        this.data[i] = value;
        changed.push(i);
      }
    }
    return Uint32Array.from(changed);
  }

  /** Set the given flat indices to `value` unconditionally (undo/redo path). */
  restore(indices: Uint32Array, value: 0 | 1): void {
    for (const i of indices) {
      this.data[i] = value;
    }
  }

  popcount(): number {
    let n = 0;
    for (const v of this.data) {
      if (v !== 0) n += 1;
    }
    return n;
  }

  /** Flat indices of set pixels, ascending (row-major order). */
  setIndices(): number[] {
    const out: number[] = [];
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== 0) out.push(i);
    }
    return out;
  }

  snapshot(): Uint8Array {
    return this.data.slice();
  }

  equals(other: Uint8Array): boolean {
    if (other.length !== this.data.length) return false;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== other[i]) return false;
    }
    return true;
  }
}

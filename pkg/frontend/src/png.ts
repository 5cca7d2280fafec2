/**
 * Minimal grayscale PNG codec.
 *
 * Only what the annotator needs: decode the 8/16-bit grayscale projection
 * images the segmentation CLI exports, and encode the 8-bit mask it imports.
 * Compression rides on the standard CompressionStream/DecompressionStream
 * APIs (zlib wrapper, available in browsers and Node alike); the chunk
 * layout, CRCs and scanline filters are implemented here.
 */

export class PngError extends Error {}

export interface DecodedPng {
  width: number;
  height: number;
  bitDepth: 8 | 16;
  /** Row-major samples; 8-bit values occupy 0..255, 16-bit 0..65535. */
  pixels: Uint16Array;
}

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

async function pipeThrough(
  data: Uint8Array,
  stream: { readable: ReadableStream<Uint8Array>; writable: WritableStream<BufferSource> },
): Promise<Uint8Array> {
  const writer = stream.writable.getWriter();
  const writing = writer.write(data as Uint8Array<ArrayBuffer>).then(() => writer.close());
  writing.catch(() => undefined); // surfaced via the read side below
  const buf = await new Response(stream.readable).arrayBuffer();
  await writing;
  return new Uint8Array(buf);
}

async function zlibDeflate(data: Uint8Array): Promise<Uint8Array> {
  return pipeThrough(data, new CompressionStream("deflate"));
}

async function zlibInflate(data: Uint8Array): Promise<Uint8Array> {
  try {
    return await pipeThrough(data, new DecompressionStream("deflate"));
  } catch (err) {
    throw new PngError(`corrupt PNG: bad zlib stream (${String(err)})`);
  }
}

function u32be(value: number): Uint8Array {
  return Uint8Array.of((value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff);
}

function readU32be(bytes: Uint8Array, offset: number): number {
  return ((bytes[offset] << 24) | (bytes[offset + 1] << 16) | (bytes[offset + 2] << 8) | bytes[offset + 3]) >>> 0;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const body = new Uint8Array(4 + data.length);
  for (let i = 0; i < 4; i++) body[i] = type.charCodeAt(i);
  body.set(data, 4);
  const out = new Uint8Array(8 + data.length + 4);
  out.set(u32be(data.length), 0);
  out.set(body, 4);
  out.set(u32be(crc32(body)), 8 + data.length);
  return out;
}

function concat(parts: Uint8Array[]): Uint8Array {
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Uint8Array(total);
  let at = 0;
  for (const p of parts) {
    out.set(p, at);
    at += p.length;
  }
  return out;
}

/** Encode row-major grayscale samples as a non-interlaced PNG. */
export async function encodeGrayscalePng(
  width: number,
  height: number,
  pixels: ArrayLike<number>,
  bitDepth: 8 | 16,
): Promise<Uint8Array> {
  if (width < 1 || height < 1 || !Number.isInteger(width) || !Number.isInteger(height)) {
    throw new PngError(`image dimensions must be positive integers, got ${width}x${height}`);
  }
  if (pixels.length !== width * height) {
    throw new PngError(`expected ${width * height} samples, got ${pixels.length}`);
  }
  const bpp = bitDepth / 8;
  const raw = new Uint8Array(height * (1 + width * bpp));
  let at = 0;
  for (let y = 0; y < height; y++) {
    raw[at++] = 0; // filter: None
    for (let x = 0; x < width; x++) {
      const v = pixels[y * width + x];
      if (bitDepth === 16) {
        raw[at++] = (v >>> 8) & 0xff;
        raw[at++] = v & 0xff;
      } else {
        raw[at++] = v & 0xff;
      }
    }
  }

  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width), 0);
  ihdr.set(u32be(height), 4);
  ihdr[8] = bitDepth;
  ihdr[9] = 0; // color type: grayscale
  ihdr[10] = 0; // compression: deflate
  ihdr[11] = 0; // filter method: adaptive
  ihdr[12] = 0; // interlace: none

  const idat = await zlibDeflate(raw);
  return concat([
    Uint8Array.from(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

function unfilter(raw: Uint8Array, width: number, height: number, bpp: number): Uint8Array {
  const stride = width * bpp;
  const out = new Uint8Array(height * stride);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const src = y * (stride + 1) + 1;
    const dst = y * stride;
    for (let i = 0; i < stride; i++) {
      const x = raw[src + i];
      const left = i >= bpp ? out[dst + i - bpp] : 0;
      const up = y > 0 ? out[dst + i - stride] : 0;
      const upLeft = y > 0 && i >= bpp ? out[dst + i - stride - bpp] : 0;
      let v: number;
      switch (filter) {
        case 0:
          v = x;
          break;
        case 1:
          v = x + left;
          break;
        case 2:
          v = x + up;
          break;
        case 3:
          v = x + ((left + up) >> 1);
          break;
        case 4:
          v = x + paeth(left, up, upLeft);
          break;
        default:
          throw new PngError(`corrupt PNG: unknown scanline filter ${filter} in row ${y}`);
      }
      out[dst + i] = v & 0xff;
    }
  }
  return out;
}

/**
 * Decode a non-interlaced grayscale PNG. Color, palette and alpha images are
 * rejected; chunk CRCs are verified so truncated or bit-flipped files fail
 * loudly instead of producing a skewed image.
 */
export async function decodeGrayscalePng(bytes: Uint8Array): Promise<DecodedPng> {
  if (bytes.length < 8 + 12 || SIGNATURE.some((v, i) => bytes[i] !== v)) {
    throw new PngError("corrupt PNG: bad signature");
  }

  let width = 0;
  let height = 0;
  let bitDepth: 8 | 16 = 8;
  let sawIhdr = false;
  let sawIend = false;
  const idatParts: Uint8Array[] = [];

  let at = 8;
  while (at < bytes.length) {
    if (at + 12 > bytes.length) {
      throw new PngError("corrupt PNG: truncated chunk header");
    }
    const length = readU32be(bytes, at);
    if (at + 12 + length > bytes.length) {
      throw new PngError("corrupt PNG: truncated chunk data");
    }
    const type = String.fromCharCode(bytes[at + 4], bytes[at + 5], bytes[at + 6], bytes[at + 7]);
    const body = bytes.subarray(at + 4, at + 8 + length);
    if (crc32(body) !== readU32be(bytes, at + 8 + length)) {
      throw new PngError(`corrupt PNG: CRC mismatch in ${type} chunk`);
    }
    const data = bytes.subarray(at + 8, at + 8 + length);

    if (!sawIhdr && type !== "IHDR") {
      throw new PngError(`corrupt PNG: first chunk is ${type}, expected IHDR`);
    }
    if (type === "IHDR") {
      if (length !== 13) throw new PngError("corrupt PNG: IHDR must be 13 bytes");
      width = readU32be(data, 0);
      height = readU32be(data, 4);
      const depth = data[8];
      const colorType = data[9];
      if (colorType !== 0) {
        throw new PngError(`not a grayscale PNG (color type ${colorType})`);
      }
      if (depth !== 8 && depth !== 16) {
        throw new PngError(`unsupported grayscale bit depth ${depth}, expected 8 or 16`);
      }
      if (data[10] !== 0 || data[11] !== 0) {
        throw new PngError("corrupt PNG: unknown compression or filter method");
      }
      if (data[12] !== 0) {
        throw new PngError("interlaced PNGs are not supported");
      }
      if (width < 1 || height < 1) {
        throw new PngError(`corrupt PNG: bad dimensions ${width}x${height}`);
      }
      bitDepth = depth;
      sawIhdr = true;
    } else if (type === "IDAT") {
      idatParts.push(data);
    } else if (type === "IEND") {
      sawIend = true;
      break;
    }
    // Ancillary chunks (tEXt, pHYs, ...) carry nothing the annotator needs.
    at += 12 + length;
  }

  if (!sawIhdr) throw new PngError("corrupt PNG: missing IHDR");
  if (!sawIend) throw new PngError("corrupt PNG: missing IEND");
  if (idatParts.length === 0) throw new PngError("corrupt PNG: no IDAT chunks");

  const bpp = bitDepth / 8;
  const raw = await zlibInflate(concat(idatParts));
  const expected = height * (1 + width * bpp);
  if (raw.length !== expected) {
    throw new PngError(`corrupt PNG: decompressed to ${raw.length} bytes, expected ${expected}`);
  }

  const flat = unfilter(raw, width, height, bpp);
  const pixels = new Uint16Array(width * height);
  if (bitDepth === 16) {
    for (let i = 0; i < pixels.length; i++) {
      pixels[i] = (flat[2 * i] << 8) | flat[2 * i + 1];
    }
  } else {
    pixels.set(flat);
  }
  return { width, height, bitDepth, pixels };
}

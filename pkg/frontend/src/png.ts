import { ViewerError } from "./types.js";

/** Minimal PNG codec.
 *
 * Browsers only expose PNG decoding through 8-bit canvases, which would
 * destroy the 16-bit textures the export bundle relies on, so the viewer
 * carries its own reader. Supports what the bundle can contain: bit depth
 * 8 or 16, gray / RGB / gray+alpha / RGBA, no palette, no interlacing.
 * Compression rides on the platform's zlib (DecompressionStream), which
 * exists in every runtime that can run the viewer.
 */

export interface DecodedPng {
  width: number;
  height: number;
  channels: 1 | 2 | 3 | 4;
  /** 8 or 16; samples hold raw codes, 0-255 or 0-65535 */
  bitDepth: 8 | 16;
  samples: Uint16Array;
}

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

async function zlib(
  data: Uint8Array,
  direction: "deflate" | "inflate",
): Promise<Uint8Array<ArrayBuffer>> {
  const stream =
    direction === "deflate"
      ? new CompressionStream("deflate")
      : new DecompressionStream("deflate");
  const piped = new Blob([data as BlobPart]).stream().pipeThrough(stream);
  return new Uint8Array(await new Response(piped).arrayBuffer());
}

const CHANNELS_BY_COLOR_TYPE: Record<number, 1 | 2 | 3 | 4> = {
  0: 1, // gray
  2: 3, // rgb
  4: 2, // gray + alpha
  6: 4, // rgba
};

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export async function decodePng(bytes: Uint8Array): Promise<DecodedPng> {
  if (bytes.length < 8 || SIGNATURE.some((v, i) => bytes[i] !== v)) {
    throw new ViewerError("not a PNG file");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);

  let width = 0;
  let height = 0;
  let bitDepth: 8 | 16 = 8;
  let channels: 1 | 2 | 3 | 4 = 1;
  const idat: Uint8Array[] = [];
  let sawIHDR = false;
  let sawIEND = false;

  let off = 8;
  while (off + 8 <= bytes.length && !sawIEND) {
    const length = view.getUint32(off);
    const type = String.fromCharCode(...bytes.subarray(off + 4, off + 8));
    if (off + 12 + length > bytes.length) {
      throw new ViewerError(`PNG chunk ${type} is truncated`);
    }
    const payload = bytes.subarray(off + 8, off + 8 + length);
    const stored = view.getUint32(off + 8 + length);
    if (crc32(bytes.subarray(off + 4, off + 8 + length)) !== stored) {
      throw new ViewerError(`PNG chunk ${type} fails its checksum`);
    }

    if (type === "IHDR") {
      sawIHDR = true;
      width = view.getUint32(off + 8);
      height = view.getUint32(off + 8 + 4);
      const depth = payload[8];
      const colorType = payload[9];
      if (depth !== 8 && depth !== 16) {
        throw new ViewerError(`unsupported PNG bit depth ${depth}`);
      }
      if (!(colorType in CHANNELS_BY_COLOR_TYPE)) {
        throw new ViewerError(`unsupported PNG color type ${colorType}`);
      }
      if (payload[12] !== 0) {
        throw new ViewerError("interlaced PNG is not supported");
      }
      bitDepth = depth;
      channels = CHANNELS_BY_COLOR_TYPE[colorType];
    } else if (type === "IDAT") {
      idat.push(payload);
    } else if (type === "IEND") {
      sawIEND = true;
    }
    // ancillary chunks are skipped
    off += 12 + length;
  }
  if (!sawIHDR || width < 1 || height < 1) {
    throw new ViewerError("PNG is missing a valid header");
  }
  if (idat.length === 0) {
    throw new ViewerError("PNG has no image data");
  }

  const packed = new Uint8Array(idat.reduce((n, c) => n + c.length, 0));
  let w = 0;
  for (const chunk of idat) {
    packed.set(chunk, w);
    w += chunk.length;
  }
  const raw = await zlib(packed, "inflate");

  const bytesPerSample = bitDepth / 8;
  const bpp = channels * bytesPerSample;
  const stride = width * bpp;
  if (raw.length !== height * (stride + 1)) {
    throw new ViewerError(
      `PNG pixel data has ${raw.length} bytes, expected ${height * (stride + 1)}`,
    );
  }

  // undo per-scanline filters in place on a copy
  const lines = new Uint8Array(height * stride);
  for (let row = 0; row < height; row++) {
    const filter = raw[row * (stride + 1)];
    const src = raw.subarray(row * (stride + 1) + 1, (row + 1) * (stride + 1));
    const out = lines.subarray(row * stride, (row + 1) * stride);
    const prev = row > 0 ? lines.subarray((row - 1) * stride, row * stride) : null;
    switch (filter) {
      case 0:
        out.set(src);
        break;
      case 1:
        for (let i = 0; i < stride; i++) {
          out[i] = (src[i] + (i >= bpp ? out[i - bpp] : 0)) & 0xff;
        }
        break;
      case 2:
        for (let i = 0; i < stride; i++) {
          out[i] = (src[i] + (prev ? prev[i] : 0)) & 0xff;
        }
        break;
      case 3:
        for (let i = 0; i < stride; i++) {
          const left = i >= bpp ? out[i - bpp] : 0;
          const up = prev ? prev[i] : 0;
          out[i] = (src[i] + ((left + up) >> 1)) & 0xff;
        }
        break;
      case 4:
        for (let i = 0; i < stride; i++) {
          const left = i >= bpp ? out[i - bpp] : 0;
          const up = prev ? prev[i] : 0;
          const upLeft = prev && i >= bpp ? prev[i - bpp] : 0;
          out[i] = (src[i] + paeth(left, up, upLeft)) & 0xff;
        }
        break;
      default:
        throw new ViewerError(`PNG row uses unknown filter ${filter}`);
    }
  }

  const samples = new Uint16Array(width * height * channels);
  if (bitDepth === 8) {
    for (let i = 0; i < samples.length; i++) samples[i] = lines[i];
  } else {
    // network byte order within each 16-bit sample
    for (let i = 0; i < samples.length; i++) {
      samples[i] = (lines[2 * i] << 8) | lines[2 * i + 1];
    }
  }
  return { width, height, channels, bitDepth, samples };
}

function chunk(type: string, payload: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + payload.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, payload.length);
  for (let i = 0; i < 4; i++) out[4 + i] = type.charCodeAt(i);
  out.set(payload, 8);
  view.setUint32(8 + payload.length, crc32(out.subarray(4, 8 + payload.length)));
  return out;
}

/** Encode an 8-bit RGBA frame (screenshot output). */
export async function encodePngRgba8(
  pixels: Uint8Array | Uint8ClampedArray,
  width: number,
  height: number,
): Promise<Uint8Array<ArrayBuffer>> {
  if (pixels.length !== width * height * 4) {
    throw new ViewerError(
      `frame has ${pixels.length} bytes, expected ${width * height * 4}`,
    );
  }
  const ihdr = new Uint8Array(13);
  const hv = new DataView(ihdr.buffer);
  hv.setUint32(0, width);
  hv.setUint32(4, height);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 6; // RGBA
  // compression, filter, interlace all 0

  const stride = width * 4;
  const raw = new Uint8Array(height * (stride + 1));
  for (let row = 0; row < height; row++) {
    raw[row * (stride + 1)] = 0; // filter: none
    raw.set(
      (pixels instanceof Uint8Array ? pixels : new Uint8Array(pixels.buffer, pixels.byteOffset, pixels.byteLength)).subarray(row * stride, (row + 1) * stride),
      row * (stride + 1) + 1,
    );
  }
  const idat = await zlib(raw, "deflate");

  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ];
  const out = new Uint8Array(parts.reduce((n, p) => n + p.length, 0));
  let off = 0;
  for (const part of parts) {
    out.set(part, off);
    off += part.length;
  }
  return out;
}

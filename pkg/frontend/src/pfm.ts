import { ViewerError } from "./types.js";

/** Portable FloatMap reader for the PTM coefficient textures.
 *
 * Header: "PF" (3 channels) or "Pf" (1), dimensions line, scale line whose
 * sign encodes endianness (negative = little). Pixel rows are stored
 * bottom-up; the returned array is top-down to match everything else.
 */

export interface FloatMap {
  width: number;
  height: number;
  channels: 1 | 3;
  /** row-major, row 0 at the top, channels interleaved */
  values: Float32Array;
}

export function parsePfm(bytes: Uint8Array): FloatMap {
  // header tokens are whitespace-separated; read them byte-wise so the
  // binary payload is never run through a text decoder
  let off = 0;
  const token = (): string => {
    while (off < bytes.length && isSpace(bytes[off])) off++;
    const start = off;
    while (off < bytes.length && !isSpace(bytes[off])) off++;
    if (start === off) throw new ViewerError("PFM header is truncated");
    return String.fromCharCode(...bytes.subarray(start, off));
  };

  const magic = token();
  if (magic !== "PF" && magic !== "Pf") {
    throw new ViewerError(`not a PFM file (magic ${JSON.stringify(magic)})`);
  }
  const channels: 1 | 3 = magic === "PF" ? 3 : 1;
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  if (!(width > 0) || !(height > 0)) {
    throw new ViewerError("PFM dimensions must be positive");
  }
  const scale = parseFloat(token());
  if (!Number.isFinite(scale) || scale === 0) {
    throw new ViewerError(`PFM scale ${scale} is invalid`);
  }
  off++; // single whitespace after the scale line

  const count = width * height * channels;
  if (bytes.length - off !== count * 4) {
    throw new ViewerError(
      `PFM payload has ${bytes.length - off} bytes, expected ${count * 4}`,
    );
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset + off, count * 4);
  const littleEndian = scale < 0;
  const gain = Math.abs(scale);

  const values = new Float32Array(count);
  const rowLen = width * channels;
  for (let row = 0; row < height; row++) {
    const srcRow = height - 1 - row; // stored bottom-up
    for (let i = 0; i < rowLen; i++) {
      const v = view.getFloat32((srcRow * rowLen + i) * 4, littleEndian);
      if (!Number.isFinite(v)) {
        throw new ViewerError("PFM contains non-finite values");
      }
      values[row * rowLen + i] = gain === 1 ? v : v * gain;
    }
  }
  return { width, height, channels, values };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x0a || byte === 0x0d || byte === 0x09;
}

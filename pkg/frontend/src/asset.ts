import {
  AlbedoMap,
  Manifest,
  NormalMap,
  PtmModel,
  ViewerAsset,
  ViewerError,
} from "./types.js";
import { parseManifest } from "./manifest.js";
import { decodePng, DecodedPng } from "./png.js";
import { parsePfm } from "./pfm.js";

/** Where bundle files come from: a directory over HTTP, a zip, a test dir.
 * Names are bundle-relative with forward slashes ("ptm/chroma.pfm"). */
export interface AssetSource {
  read(name: string): Promise<Uint8Array>;
}

/** Static-file source for a served bundle directory. */
export function fetchSource(baseUrl: string): AssetSource {
  const base = baseUrl.endsWith("/") ? baseUrl : baseUrl + "/";
  return {
    async read(name: string): Promise<Uint8Array> {
      const resp = await fetch(base + name);
      if (!resp.ok) {
        throw new ViewerError(`${name}: fetch failed (${resp.status})`);
      }
      return new Uint8Array(await resp.arrayBuffer());
    },
  };
}

async function readFile(source: AssetSource, name: string): Promise<Uint8Array> {
  try {
    return await source.read(name);
  } catch (err) {
    if (err instanceof ViewerError) throw err;
    throw new ViewerError(`${name}: unreadable (${(err as Error).message})`);
  }
}

async function readPngFile(source: AssetSource, name: string): Promise<DecodedPng> {
  const bytes = await readFile(source, name);
  try {
    return await decodePng(bytes);
  } catch (err) {
    throw new ViewerError(`${name}: ${(err as Error).message}`);
  }
}

function checkDims(name: string, w: number, h: number, manifest: Manifest): void {
  if (w !== manifest.width || h !== manifest.height) {
    throw new ViewerError(
      `${name}: ${w}x${h} does not match the manifest (${manifest.width}x${manifest.height})`,
    );
  }
}

/** Recover unit normals from the RGB encoding: v = 2*code/maxCode - 1,
 * an all-zero pixel is the invalid sentinel, short vectors are corrupt,
 * z is folded to the upper hemisphere. */
export function decodeNormals(png: DecodedPng): NormalMap {
  if (png.channels !== 3) {
    throw new ViewerError(`normal map PNG has ${png.channels} channels, needs 3`);
  }
  const n = png.width * png.height;
  const maxCode = (1 << png.bitDepth) - 1;
  const vectors = new Float32Array(n * 3);
  const valid = new Uint8Array(n);
  let corrupt = 0;
  for (let p = 0; p < n; p++) {
    const r = png.samples[3 * p];
    const g = png.samples[3 * p + 1];
    const b = png.samples[3 * p + 2];
    if (r === 0 && g === 0 && b === 0) continue; // sentinel
    let x = (2 * r) / maxCode - 1;
    let y = (2 * g) / maxCode - 1;
    let z = (2 * b) / maxCode - 1;
    const norm = Math.hypot(x, y, z);
    if (norm < 0.5) {
      corrupt += 1;
      continue;
    }
    x /= norm;
    y /= norm;
    z = Math.abs(z / norm); // quantization can dip grazing normals below horizon
    vectors[3 * p] = x;
    vectors[3 * p + 1] = y;
    vectors[3 * p + 2] = z;
    valid[p] = 1;
  }
  if (corrupt > 0) {
    console.warn(`normal map: ${corrupt} corrupt pixels marked invalid`);
  }
  return { width: png.width, height: png.height, vectors, valid };
}

/** The bundle albedo PNG stores reflectance * exposure; undo that here so
 * downstream shading is in scene-linear units. */
export function decodeAlbedo(png: DecodedPng, exposure: number, name: string): AlbedoMap {
  if (png.channels !== 1 && png.channels !== 3) {
    throw new ViewerError(`${name}: ${png.channels}-channel albedo is unsupported`);
  }
  const maxCode = (1 << png.bitDepth) - 1;
  const values = new Float32Array(png.samples.length);
  for (let i = 0; i < png.samples.length; i++) {
    values[i] = png.samples[i] / maxCode / exposure;
  }
  return { width: png.width, height: png.height, channels: png.channels, values };
}

function decodeMask(png: DecodedPng, name: string): Uint8Array {
  if (png.channels !== 1) {
    throw new ViewerError(`${name}: validity mask must be grayscale`);
  }
  const maxCode = (1 << png.bitDepth) - 1;
  const valid = new Uint8Array(png.samples.length);
  for (let i = 0; i < png.samples.length; i++) {
    valid[i] = png.samples[i] / maxCode >= 0.5 ? 1 : 0;
  }
  return valid;
}

const PTM_BASIS = "ptm6-lrgb";

async function loadPtm(source: AssetSource, manifest: Manifest): Promise<PtmModel> {
  let desc: unknown;
  try {
    desc = JSON.parse(new TextDecoder().decode(await readFile(source, "ptm/ptm.json")));
  } catch (err) {
    if (err instanceof ViewerError) throw err;
    throw new ViewerError(`ptm/ptm.json: not valid JSON (${(err as Error).message})`);
  }
  const d = desc as { basis?: unknown; width?: unknown; height?: unknown };
  if (d.basis !== PTM_BASIS) {
    throw new ViewerError(`ptm/ptm.json: unsupported basis ${JSON.stringify(d.basis)}`);
  }
  if (d.width !== manifest.width || d.height !== manifest.height) {
    throw new ViewerError("ptm/ptm.json: dimensions disagree with the manifest");
  }

  const lo = parsePfm(await readFile(source, "ptm/coeffs_012.pfm"));
  const hi = parsePfm(await readFile(source, "ptm/coeffs_345.pfm"));
  const chromaMap = parsePfm(await readFile(source, "ptm/chroma.pfm"));
  for (const [name, map] of [
    ["ptm/coeffs_012.pfm", lo],
    ["ptm/coeffs_345.pfm", hi],
    ["ptm/chroma.pfm", chromaMap],
  ] as const) {
    checkDims(name, map.width, map.height, manifest);
    if (map.channels !== 3) {
      throw new ViewerError(`${name}: expected 3 channels, got ${map.channels}`);
    }
  }
  const maskPng = await readPngFile(source, "ptm/mask.png");
  checkDims("ptm/mask.png", maskPng.width, maskPng.height, manifest);
  const valid = decodeMask(maskPng, "ptm/mask.png");

  const n = manifest.width * manifest.height;
  const coeffs = new Float32Array(n * 6);
  const chroma = new Float32Array(n * 3);
  for (let p = 0; p < n; p++) {
    if (!valid[p]) {
      chroma[3 * p] = chroma[3 * p + 1] = chroma[3 * p + 2] = 1;
      continue;
    }
    for (let k = 0; k < 3; k++) {
      coeffs[6 * p + k] = lo.values[3 * p + k];
      coeffs[6 * p + 3 + k] = hi.values[3 * p + k];
      chroma[3 * p + k] = chromaMap.values[3 * p + k];
    }
  }
  return { width: manifest.width, height: manifest.height, coeffs, chroma, valid };
}

/** Load and validate a full bundle. Every mode listed in the manifest must
 * have decodable textures of matching size or this throws. */
export async function loadAsset(source: AssetSource): Promise<ViewerAsset> {
  let doc: unknown;
  try {
    doc = JSON.parse(new TextDecoder().decode(await readFile(source, "manifest.json")));
  } catch (err) {
    if (err instanceof ViewerError) throw err;
    throw new ViewerError(`manifest.json: not valid JSON (${(err as Error).message})`);
  }
  const manifest = parseManifest(doc);
  const asset: ViewerAsset = { manifest };

  if (manifest.modes.includes("lambertian")) {
    const normalsPng = await readPngFile(source, "normals_rgb.png");
    checkDims("normals_rgb.png", normalsPng.width, normalsPng.height, manifest);
    asset.normals = decodeNormals(normalsPng);
    const albedoPng = await readPngFile(source, "albedo.png");
    checkDims("albedo.png", albedoPng.width, albedoPng.height, manifest);
    asset.albedo = decodeAlbedo(albedoPng, manifest.exposure, "albedo.png");
  }
  if (manifest.modes.includes("ptm")) {
    asset.ptm = await loadPtm(source, manifest);
  }
  return asset;
}

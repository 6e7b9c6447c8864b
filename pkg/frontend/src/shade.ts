import {
  AlbedoMap,
  NormalMap,
  PtmModel,
  Vec3,
  ViewerAsset,
  LightAngles,
  ShadeMode,
  ViewerError,
} from "./types.js";
import { lightFromAngles } from "./light.js";

/** CPU shading core. The WebGL path mirrors these formulas; tests and
 * screenshots run through here so the reference math is what ships. */

/** Scene-linear RGB, no exposure applied, invalid pixels black. */
export function shadeLambertian(
  normals: NormalMap,
  albedo: AlbedoMap,
  light: Vec3,
  intensity = 1.0,
): Float32Array {
  if (!(intensity > 0)) {
    throw new ViewerError(`intensity must be positive, got ${intensity}`);
  }
  if (albedo.width !== normals.width || albedo.height !== normals.height) {
    throw new ViewerError("albedo and normal map dimensions differ");
  }
  const n = normals.width * normals.height;
  const out = new Float32Array(n * 3);
  for (let p = 0; p < n; p++) {
    if (!normals.valid[p]) continue;
    const shade = Math.max(
      0,
      normals.vectors[3 * p] * light.x +
        normals.vectors[3 * p + 1] * light.y +
        normals.vectors[3 * p + 2] * light.z,
    );
    const s = intensity * shade;
    if (albedo.channels === 3) {
      out[3 * p] = s * albedo.values[3 * p];
      out[3 * p + 1] = s * albedo.values[3 * p + 1];
      out[3 * p + 2] = s * albedo.values[3 * p + 2];
    } else {
      const v = s * albedo.values[p];
      out[3 * p] = v;
      out[3 * p + 1] = v;
      out[3 * p + 2] = v;
    }
  }
  return out;
}

/** Evaluate the biquadratic model: channel c = max(0, poly) * chroma_c. */
export function shadePtm(model: PtmModel, light: Vec3): Float32Array {
  if (!(light.z > 0)) {
    throw new ViewerError("PTM shading needs an upper-hemisphere light");
  }
  const lu = light.x;
  const lv = light.y;
  const basis = [lu * lu, lv * lv, lu * lv, lu, lv, 1];
  const n = model.width * model.height;
  const out = new Float32Array(n * 3);
  for (let p = 0; p < n; p++) {
    if (!model.valid[p]) continue;
    let lum = 0;
    for (let k = 0; k < 6; k++) lum += model.coeffs[6 * p + k] * basis[k];
    if (lum < 0) lum = 0;
    out[3 * p] = lum * model.chroma[3 * p];
    out[3 * p + 1] = lum * model.chroma[3 * p + 1];
    out[3 * p + 2] = lum * model.chroma[3 * p + 2];
  }
  return out;
}

/** Scene-linear frame for a light given as angles, dispatched on mode. */
export function renderLinear(
  asset: ViewerAsset,
  angles: LightAngles,
  mode: ShadeMode,
): Float32Array {
  const light = lightFromAngles(angles);
  if (!asset.manifest.modes.includes(mode)) {
    throw new ViewerError(`mode ${mode} is not available in this asset`);
  }
  if (mode === "lambertian") {
    if (!asset.normals || !asset.albedo) {
      throw new ViewerError("asset is missing the lambertian textures");
    }
    return shadeLambertian(asset.normals, asset.albedo, light);
  }
  if (!asset.ptm) {
    throw new ViewerError("asset is missing the PTM archive");
  }
  return shadePtm(asset.ptm, light);
}

/** Quantize a linear frame for display: clamp(linear * exposure) to 8-bit
 * RGBA with full alpha. */
export function toFrame8(
  linear: Float32Array,
  exposure: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (!(exposure > 0) || !Number.isFinite(exposure)) {
    throw new ViewerError(`exposure must be a positive number, got ${exposure}`);
  }
  const n = linear.length / 3;
  const out = new Uint8ClampedArray(n * 4);
  for (let p = 0; p < n; p++) {
    for (let c = 0; c < 3; c++) {
      const v = Math.min(1, Math.max(0, linear[3 * p + c] * exposure));
      out[4 * p + c] = Math.round(v * 255);
    }
    out[4 * p + 3] = 255;
  }
  return out;
}

/** One call from UI state to a displayable frame. */
export function renderFrame(
  asset: ViewerAsset,
  angles: LightAngles,
  mode: ShadeMode,
  exposure: number,
): Uint8ClampedArray<ArrayBuffer> {
  return toFrame8(renderLinear(asset, angles, mode), exposure);
}

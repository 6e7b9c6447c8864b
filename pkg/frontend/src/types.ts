/** Shared shapes for the viewer core. All image data is row-major, row 0 at
 * the top of the image; scene coordinates are x right, y up, z toward the
 * viewer, so pixel (row, col) sits at (x, y) = (col, height - 1 - row). */

export type ShadeMode = "lambertian" | "ptm";

export interface Manifest {
  asset_id: string;
  width: number;
  height: number;
  modes: ShadeMode[];
  exposure: number;
}

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface LightAngles {
  azimuthDeg: number;
  elevationDeg: number;
}

/** Decoded normal map: unit vectors where valid, zeros elsewhere. */
export interface NormalMap {
  width: number;
  height: number;
  /** xyz interleaved, length w*h*3 */
  vectors: Float32Array;
  valid: Uint8Array;
}

/** Linear reflectance, one or three channels. */
export interface AlbedoMap {
  width: number;
  height: number;
  channels: 1 | 3;
  values: Float32Array;
}

/** Per-pixel biquadratic luminance model plus static chroma. */
export interface PtmModel {
  width: number;
  height: number;
  /** 6 coefficients per pixel: lu^2, lv^2, lu*lv, lu, lv, 1 terms */
  coeffs: Float32Array;
  /** 3 chroma ratios per pixel, unit mean on valid pixels */
  chroma: Float32Array;
  valid: Uint8Array;
}

export interface ViewerAsset {
  manifest: Manifest;
  normals?: NormalMap;
  albedo?: AlbedoMap;
  ptm?: PtmModel;
}

/** Serializable UI state; the screenshot sidecar is exactly this. */
export interface LightState {
  azimuth_deg: number;
  elevation_deg: number;
  mode: ShadeMode;
  exposure: number;
}

export class ViewerError extends Error {}

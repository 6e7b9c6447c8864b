import { LightState, ShadeMode, ViewerAsset, ViewerError } from "./types.js";
import { renderFrame } from "./shade.js";
import { encodePngRgba8 } from "./png.js";

export interface Screenshot {
  png: Uint8Array<ArrayBuffer>;
  /** JSON text of the LightState that produced the frame. */
  sidecar: string;
}

/** Render the current state to a PNG plus a sidecar that reproduces it:
 * feeding the sidecar back through renderFrame yields the identical image. */
export async function exportScreenshot(
  asset: ViewerAsset,
  state: LightState,
): Promise<Screenshot> {
  const frame = renderFrame(
    asset,
    { azimuthDeg: state.azimuth_deg, elevationDeg: state.elevation_deg },
    state.mode,
    state.exposure,
  );
  const png = await encodePngRgba8(frame, asset.manifest.width, asset.manifest.height);
  return { png, sidecar: JSON.stringify(state, null, 2) + "\n" };
}

const MODES: ShadeMode[] = ["lambertian", "ptm"];

/** Validate a sidecar document back into viewer state. */
export function parseSidecar(text: string): LightState {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new ViewerError(`sidecar is not valid JSON (${(err as Error).message})`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ViewerError("sidecar must be a JSON object");
  }
  const d = doc as Record<string, unknown>;
  const az = d["azimuth_deg"];
  const el = d["elevation_deg"];
  const mode = d["mode"];
  const exposure = d["exposure"];
  if (typeof az !== "number" || !Number.isFinite(az)) {
    throw new ViewerError("sidecar azimuth_deg must be a number");
  }
  if (typeof el !== "number" || !(el > 0) || !(el <= 90)) {
    throw new ViewerError("sidecar elevation_deg must be in (0, 90]");
  }
  if (typeof mode !== "string" || !MODES.includes(mode as ShadeMode)) {
    throw new ViewerError(`sidecar mode must be one of ${MODES.join(", ")}`);
  }
  if (typeof exposure !== "number" || !(exposure > 0)) {
    throw new ViewerError("sidecar exposure must be positive");
  }
  return {
    azimuth_deg: az,
    elevation_deg: el,
    mode: mode as ShadeMode,
    exposure,
  };
}

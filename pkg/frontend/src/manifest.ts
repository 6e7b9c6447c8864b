import { Manifest, ShadeMode, ViewerError } from "./types.js";

const KNOWN_MODES: ShadeMode[] = ["lambertian", "ptm"];

/** Validate a parsed manifest.json. Throws ViewerError with the offending
 * field named, so load failures are actionable without devtools. */
export function parseManifest(doc: unknown): Manifest {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ViewerError("manifest must be a JSON object");
  }
  const m = doc as Record<string, unknown>;
  const extra = Object.keys(m).filter(
    (k) => !["asset_id", "width", "height", "modes", "exposure"].includes(k),
  );
  if (extra.length > 0) {
    throw new ViewerError(`manifest has unknown keys: ${extra.join(", ")}`);
  }
  if (typeof m.asset_id !== "string" || m.asset_id.length === 0) {
    throw new ViewerError("manifest asset_id must be a non-empty string");
  }
  for (const key of ["width", "height"] as const) {
    const v = m[key];
    if (typeof v !== "number" || !Number.isInteger(v) || v < 1) {
      throw new ViewerError(`manifest ${key} must be a positive integer`);
    }
  }
  if (!Array.isArray(m.modes) || m.modes.length === 0) {
    throw new ViewerError("manifest modes must be a non-empty array");
  }
  for (const mode of m.modes) {
    if (!KNOWN_MODES.includes(mode as ShadeMode)) {
      throw new ViewerError(`manifest lists unsupported mode ${JSON.stringify(mode)}`);
    }
  }
  if (new Set(m.modes).size !== m.modes.length) {
    throw new ViewerError("manifest modes must be unique");
  }
  if (typeof m.exposure !== "number" || !Number.isFinite(m.exposure) || m.exposure <= 0) {
    throw new ViewerError("manifest exposure must be a positive number");
  }
  return {
    asset_id: m.asset_id,
    width: m.width as number,
    height: m.height as number,
    modes: m.modes as ShadeMode[],
    exposure: m.exposure,
  };
}

import { LightAngles, Vec3, ViewerError } from "./types.js";

/** Unit light direction for azimuth (degrees counterclockwise from +x)
 * and elevation above the image plane. Same convention as the batch tool's
 * sweep/relight stages. */
export function lightFromAngles(angles: LightAngles): Vec3 {
  const { azimuthDeg, elevationDeg } = angles;
  if (!(elevationDeg > 0) || elevationDeg > 90) {
    throw new ViewerError(
      `elevation must be in (0, 90], got ${elevationDeg}`,
    );
  }
  const a = (azimuthDeg * Math.PI) / 180;
  const e = (elevationDeg * Math.PI) / 180;
  return {
    x: Math.cos(e) * Math.cos(a),
    y: Math.cos(e) * Math.sin(a),
    z: Math.sin(e),
  };
}

export const MIN_ELEVATION_DEG = 5;

/** Pointer position to light angles, the usual relighting-viewer idiom:
 * angle around the image center sets azimuth, radial distance sets
 * elevation. The center is the zenith (90 deg); the control radius maps to
 * the 5 deg raking floor, and anything beyond it clamps there.
 *
 * Pointer coordinates have y growing downward; scene y grows upward, so
 * the vertical offset is negated.
 */
export function dragToAngles(
  px: number,
  py: number,
  centerX: number,
  centerY: number,
  controlRadius: number,
): LightAngles {
  if (!(controlRadius > 0)) {
    throw new ViewerError("control radius must be positive");
  }
  const dx = px - centerX;
  const dy = centerY - py;
  const r = Math.min(1, Math.hypot(dx, dy) / controlRadius);
  const elevationDeg = 90 - (90 - MIN_ELEVATION_DEG) * r;
  let azimuthDeg = (Math.atan2(dy, dx) * 180) / Math.PI;
  if (azimuthDeg < 0) azimuthDeg += 360;
  return { azimuthDeg, elevationDeg };
}

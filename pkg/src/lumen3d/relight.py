"""Virtual relighting of (normals, albedo) under directional lights.

Shading is purely local: I = intensity * rho * max(0, n . l). Attached
shadows come from the clamp; nothing casts shadows because the relit field
has no geometry to occlude.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .imagery import ImageStack, RasterImage, save_map
from .lightcal import LightSet
from .psolve import AlbedoMap, NormalField

logger = logging.getLogger(__name__)


def _check_light(light: np.ndarray) -> np.ndarray:
    light = np.asarray(light, dtype=np.float64)
    if light.shape != (3,):
        raise ConfigError(f"light direction must be a 3-vector, got shape {light.shape}")
    norm = np.linalg.norm(light)
    if abs(norm - 1.0) > 1e-6:
        raise ConfigError(f"light direction must be unit length, |l| = {norm:.6f}")
    return light


def relight_lambertian(
    normals: NormalField, albedo: AlbedoMap, light, intensity: float = 1.0
) -> RasterImage:
    """Render one image: per valid pixel intensity * rho * max(0, n . light)."""
    light = _check_light(light)
    if not (intensity > 0):
        raise ConfigError(f"intensity must be positive, got {intensity}")
    if albedo.values.shape[:2] != normals.normals.shape[:2]:
        raise DataError(
            f"albedo {albedo.values.shape[:2]} and normals "
            f"{normals.normals.shape[:2]} dimensions differ"
        )
    shading = np.maximum(0.0, normals.normals @ light)
    out = intensity * albedo.values * shading[:, :, None]
    out[~(normals.valid & albedo.valid)] = 0.0
    return RasterImage(out)


def synthesize_stack(normals: NormalField, albedo: AlbedoMap, lights: LightSet) -> ImageStack:
    """Render one image per light; the stack mask is the joint validity."""
    images = [
        relight_lambertian(normals, albedo, d, s)
        for d, s in zip(lights.directions, lights.intensities)
    ]
    return ImageStack(tuple(images), normals.valid & albedo.valid)


def light_from_angles(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit direction for azimuth (degrees from +x, counterclockwise) and elevation."""
    a = math.radians(azimuth_deg)
    e = math.radians(elevation_deg)
    return np.array([math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)])


def _frame_name(azimuth_deg: float) -> str:
    if float(azimuth_deg).is_integer():
        return f"rake_{int(azimuth_deg):03d}.png"
    return f"rake_{azimuth_deg:05.1f}.png"


def raking_sweep(
    normals: NormalField,
    albedo: AlbedoMap,
    elevation: float,
    count: int,
    out_dir,
) -> dict:
    """Render a ring of renders at one elevation, azimuths 360*i/count.

    Frames go to out_dir as 16-bit PNGs scaled by a common exposure factor
    1/max(1, peak radiance), recorded with the azimuth list in sweep.json.
    Returns the index document.
    """
    if not (0 < elevation <= 90):
        raise ConfigError(f"elevation must lie in (0, 90] degrees, got {elevation}")
    if count < 1:
        raise ConfigError(f"count must be at least 1, got {count}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"{out_dir}: cannot create sweep directory: {exc}") from exc

    azimuths = [round(360.0 * i / count, 1) for i in range(count)]
    frames = [
        relight_lambertian(normals, albedo, light_from_angles(a, elevation))
        for a in azimuths
    ]
    peak = max(img.data.max() for img in frames)
    exposure = 1.0 / max(1.0, peak)
    index = {"elevation_deg": float(elevation), "frames": [], "exposure": exposure}
    for a, img in zip(azimuths, frames):
        name = _frame_name(a)
        save_map(RasterImage(img.data * exposure), out_dir / name, "png16")
        index["frames"].append({"azimuth_deg": a, "file": name})
    with open(out_dir / "sweep.json", "w") as f:
        json.dump(index, f, indent=2)
        f.write("\n")
    logger.info("wrote %d raking frames at %.1f deg elevation to %s", count, elevation, out_dir)
    return index

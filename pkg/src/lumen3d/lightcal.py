"""Light calibration from reference spheres and pre-calibrated dome manifests.

Directions point from the surface toward the light, unit length, in the
camera frame (x right, y up, z toward the viewer). Intensities are relative
linear units; when a matte sphere serves all images of a stack, the
per-light values are mutually consistent (the sphere's own albedo is an
unknown common factor).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .imagery import SATURATION_LEVEL, ImageStack, RasterImage

logger = logging.getLogger(__name__)

# Fraction of in-disk luminance mass that counts as the highlight.
HIGHLIGHT_PERCENTILE = 99.5
# A matte fit needs a minimum of geometry to be trustworthy.
MIN_MATTE_PIXELS = 50
INCIDENCE_GATE = 0.2


@dataclass(frozen=True)
class LightSet:
    """k light directions (unit vectors) with per-light scalar intensities."""

    directions: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        s = np.asarray(self.intensities, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 3:
            raise DataError(f"directions must be (k, 3), got {d.shape}")
        if s.shape != (d.shape[0],):
            raise DataError(f"intensities shape {s.shape} does not match {d.shape[0]} lights")
        if d.shape[0] < 1:
            raise DataError("light set is empty")
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise DataError("light directions must be unit vectors (tolerance 1e-6)")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise DataError("light intensities must be positive and finite")
        d = np.ascontiguousarray(d)
        s = np.ascontiguousarray(s)
        d.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "intensities", s)

    def __len__(self) -> int:
        return self.directions.shape[0]

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.directions, tol=1e-6))


def require_rank3(lights: LightSet) -> None:
    """Reject light sets unusable for photometric stereo (coplanar directions)."""
    if lights.rank() < 3:
        raise DataError("light directions are coplanar (rank < 3); cannot solve for normals")


@dataclass(frozen=True)
class SphereAnnotation:
    """Operator-provided sphere location: subpixel (row, col) center, pixel radius."""

    center: tuple
    radius: float
    finish: str

    def __post_init__(self):
        if self.finish not in ("specular", "matte"):
            raise ConfigError(f"sphere finish must be 'specular' or 'matte', got {self.finish!r}")
        if len(self.center) != 2:
            raise ConfigError("sphere center must be (row, col)")
        if not (self.radius > 0):
            raise ConfigError("sphere radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


def _disk_pixels(image: RasterImage, sphere: SphereAnnotation):
    """Integer pixel coordinates inside the sphere's disk. Rejects clipped disks."""
    r0, c0 = sphere.center
    rad = sphere.radius
    h, w = image.height, image.width
    if r0 - rad < -0.5 or c0 - rad < -0.5 or r0 + rad > h - 0.5 or c0 + rad > w - 0.5:
        raise ConfigError(
            f"sphere at ({r0:.1f}, {c0:.1f}) radius {rad:.1f} is not fully inside the image"
        )
    rows, cols = np.mgrid[
        int(math.floor(r0 - rad)) : int(math.ceil(r0 + rad)) + 1,
        int(math.floor(c0 - rad)) : int(math.ceil(c0 + rad)) + 1,
    ]
    inside = (rows - r0) ** 2 + (cols - c0) ** 2 <= rad**2
    return rows[inside], cols[inside]


def estimate_direction_from_specular_sphere(
    image: RasterImage, sphere: SphereAnnotation
) -> np.ndarray:
    """Estimate one light direction from the mirror highlight on a specular sphere.

    The highlight is localized as the intensity-weighted centroid of in-disk
    pixels at or above the 99.5th percentile of in-disk luminance. The sphere
    normal there follows from orthographic disk geometry, and the light is the
    mirror reflection of the view axis about that normal.
    """
    if sphere.finish != "specular":
        raise ConfigError("direction estimation needs a specular sphere")
    rows, cols = _disk_pixels(image, sphere)
    lum = image.luminance()[rows, cols]
    sat_frac = np.mean(np.any(image.data[rows, cols] >= SATURATION_LEVEL, axis=1))
    if sat_frac > 0.20:
        logger.warning(
            "specular sphere at %s: %.0f%% of the disk is saturated; "
            "the highlight centroid may be biased by blooming",
            sphere.center,
            100 * sat_frac,
        )
    threshold = np.percentile(lum, HIGHLIGHT_PERCENTILE)
    # A highlight must stand out from the sphere body, not just top the
    # percentile of a flat disk.
    if lum.max() <= 1.5 * np.median(lum) + 1e-9:
        raise DataError(f"no highlight found on sphere at {sphere.center}")
    sel = lum >= threshold
    weights = lum[sel]
    row_c = float(np.sum(weights * rows[sel]) / weights.sum())
    col_c = float(np.sum(weights * cols[sel]) / weights.sum())

    r0, c0 = sphere.center
    u = (col_c - c0) / sphere.radius
    v = (r0 - row_c) / sphere.radius  # y grows upward
    rr = u * u + v * v
    if rr > 1.0:
        raise DataError(f"highlight centroid outside sphere disk at {sphere.center}")
    nz = math.sqrt(1.0 - rr)
    # Mirror the view axis v = (0,0,1) about n: L = 2(n.v)n - v.
    light = np.array([2 * nz * u, 2 * nz * v, 2 * nz * nz - 1.0])
    return light / np.linalg.norm(light)


def estimate_intensity_from_matte_sphere(
    image: RasterImage, sphere: SphereAnnotation, direction: np.ndarray
) -> float:
    """Fit the light intensity over the lit part of a matte sphere.

    Minimizes sum (I - phi * (n . l))^2 over in-disk pixels with incidence
    n . l > 0.2 and no saturated channel; phi comes out in closed form as the
    ratio of inner products. The sphere's own albedo is absorbed into phi.
    """
    if sphere.finish != "matte":
        raise ConfigError("intensity estimation needs a matte sphere")
    direction = np.asarray(direction, dtype=np.float64)
    rows, cols = _disk_pixels(image, sphere)
    r0, c0 = sphere.center
    u = (cols - c0) / sphere.radius
    v = (r0 - rows) / sphere.radius
    nz = np.sqrt(np.maximum(0.0, 1.0 - u * u - v * v))
    shading = u * direction[0] + v * direction[1] + nz * direction[2]
    unsaturated = ~np.any(image.data[rows, cols] >= SATURATION_LEVEL, axis=1)
    usable = (shading > INCIDENCE_GATE) & unsaturated
    n_usable = int(usable.sum())
    if n_usable < MIN_MATTE_PIXELS:
        raise DataError(
            f"fewer than {MIN_MATTE_PIXELS} usable pixels on matte sphere at "
            f"{sphere.center} ({n_usable} passed the incidence/saturation gates)"
        )
    s = shading[usable]
    i = image.luminance()[rows, cols][usable]
    phi = float(np.dot(i, s) / np.dot(s, s))
    if phi <= 0:
        raise DataError(f"non-positive intensity fit on matte sphere at {sphere.center}")
    return phi


def _matte_fit_rms(image, sphere, direction, phi) -> float:
    rows, cols = _disk_pixels(image, sphere)
    r0, c0 = sphere.center
    u = (cols - c0) / sphere.radius
    v = (r0 - rows) / sphere.radius
    nz = np.sqrt(np.maximum(0.0, 1.0 - u * u - v * v))
    shading = u * direction[0] + v * direction[1] + nz * direction[2]
    unsaturated = ~np.any(image.data[rows, cols] >= SATURATION_LEVEL, axis=1)
    usable = (shading > INCIDENCE_GATE) & unsaturated
    resid = image.luminance()[rows, cols][usable] - phi * shading[usable]
    return float(np.sqrt(np.mean(resid**2))) if resid.size else float("nan")


def calibrate_with_report(stack: ImageStack, spheres) -> tuple:
    """Calibrate one light per image from sphere annotations.

    Returns (LightSet, report) where the report carries per-image, per-sphere
    direction estimates and matte fit residuals for diagnostics.
    """
    spheres = list(spheres)
    specular = [s for s in spheres if s.finish == "specular"]
    matte = [s for s in spheres if s.finish == "matte"]
    if not specular:
        raise ConfigError("calibration needs at least one specular sphere")
    if len(stack) < 3:
        raise DataError(f"calibration stack has {len(stack)} images; need at least 3")

    directions = np.zeros((len(stack), 3))
    intensities = np.ones(len(stack))
    report = {"images": []}
    for j, image in enumerate(stack.images):
        entry = {"image_index": j, "spheres": []}
        try:
            per_sphere = [
                estimate_direction_from_specular_sphere(image, s) for s in specular
            ]
            mean_dir = np.mean(per_sphere, axis=0)
            norm = np.linalg.norm(mean_dir)
            if norm < 1e-6:
                raise DataError("specular spheres disagree completely on the direction")
            mean_dir = mean_dir / norm
            for s, d in zip(specular, per_sphere):
                entry["spheres"].append(
                    {
                        "center": list(s.center),
                        "finish": "specular",
                        "direction": [float(x) for x in d],
                        "angle_to_mean_deg": float(
                            math.degrees(math.acos(np.clip(np.dot(d, mean_dir), -1, 1)))
                        ),
                    }
                )
            directions[j] = mean_dir
            if matte:
                phis = []
                for s in matte:
                    phi = estimate_intensity_from_matte_sphere(image, s, mean_dir)
                    phis.append(phi)
                    entry["spheres"].append(
                        {
                            "center": list(s.center),
                            "finish": "matte",
                            "intensity": phi,
                            "fit_rms": _matte_fit_rms(image, s, mean_dir, phi),
                        }
                    )
                intensities[j] = float(np.mean(phis))
        except DataError as exc:
            raise DataError(f"image {j}: {exc}") from exc
        report["images"].append(entry)
    if not matte:
        logger.warning(
            "no matte sphere annotated: assuming unit intensity for all %d lights; "
            "albedo estimates will carry per-light gain error",
            len(stack),
        )
    lights = LightSet(directions, intensities)
    require_rank3(lights)
    return lights, report


def calibrate_from_spheres(stack: ImageStack, spheres) -> LightSet:
    """Per-image light directions from specular spheres, intensities from a matte one."""
    lights, _ = calibrate_with_report(stack, spheres)
    return lights


# ---------------------------------------------------------------------------
# Dome manifests: {"dome_id": str, "leds": [{"dir": [x,y,z], "intensity": s}]}

def load_dome_manifest(path) -> LightSet:
    """Load a pre-calibrated dome LED manifest as a LightSet in LED order."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise DataError(f"{path}: cannot read dome manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: dome manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "leds" not in doc or "dome_id" not in doc:
        raise DataError(f"{path}: dome manifest must be an object with 'dome_id' and 'leds'")
    leds = doc["leds"]
    if not isinstance(leds, list) or not leds:
        raise DataError(f"{path}: 'leds' must be a non-empty array")
    directions = np.zeros((len(leds), 3))
    intensities = np.zeros(len(leds))
    for i, led in enumerate(leds):
        try:
            d = np.asarray([float(x) for x in led["dir"]], dtype=np.float64)
            s = float(led["intensity"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: LED {i}: malformed entry ({exc})") from exc
        if d.shape != (3,):
            raise DataError(f"{path}: LED {i}: direction must have 3 components")
        norm = np.linalg.norm(d)
        if abs(norm - 1.0) > 1e-3:
            raise DataError(f"{path}: LED {i}: direction norm {norm:.4f} is not unit")
        d = d / norm
        if d[2] <= 0:
            raise DataError(f"{path}: LED {i}: direction must lie in the upper hemisphere")
        if not (s > 0):
            raise DataError(f"{path}: LED {i}: intensity must be positive")
        directions[i] = d
        intensities[i] = s
    logger.info("loaded dome %r with %d LEDs", doc["dome_id"], len(leds))
    return LightSet(directions, intensities)


def save_lights(lights: LightSet, path) -> None:
    """Write a LightSet as JSON: {"lights": [{"dir": [...], "intensity": s}, ...]}."""
    doc = {
        "lights": [
            {"dir": [float(x) for x in d], "intensity": float(s)}
            for d, s in zip(lights.directions, lights.intensities)
        ]
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_lights(path) -> LightSet:
    """Read a LightSet written by save_lights."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read light set: {exc}") from exc
    try:
        dirs = np.array([e["dir"] for e in doc["lights"]], dtype=np.float64)
        intens = np.array([e["intensity"] for e in doc["lights"]], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed light set ({exc})") from exc
    return LightSet(dirs, intens)

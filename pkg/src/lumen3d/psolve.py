"""Per-pixel Lambertian photometric stereo with a robust trimmed variant.

The model per pixel and light j is I_j = phi_j * rho * (n . l_j). Writing
m = rho * n turns it into ordinary least squares over the luminance; the
normal is m normalized and the luminance albedo is |m|. Per-channel albedo
follows by refitting the magnitude one channel at a time with n held fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .imagery import SATURATION_LEVEL, ImageStack, RasterImage
from .lightcal import LightSet, require_rank3

logger = logging.getLogger(__name__)

MIN_ALBEDO = 1e-6  # |m| below this means the pixel saw no usable signal
# Local 3x3 systems with eigenvalue ratio below this are rank-deficient.
COND_GATE = 1e-10

DEFAULT_TRIM = (0.15, 0.10)
MAX_TRIM_ITERATIONS = 5


@dataclass(frozen=True)
class NormalField:
    """Per-pixel unit normals in the camera frame, n_z >= 0 where valid.

    Invalid pixels hold the zero vector. The optional `flipped` raster marks
    pixels whose solve produced a camera-averted normal that was negated to
    restore the hemisphere invariant (a diagnostic, not an error).
    """

    normals: np.ndarray
    valid: np.ndarray
    flipped: np.ndarray = None

    def __post_init__(self):
        n = np.asarray(self.normals, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if n.ndim != 3 or n.shape[2] != 3:
            raise DataError(f"normals must be (H, W, 3), got {n.shape}")
        if v.shape != n.shape[:2]:
            raise DataError(f"valid mask shape {v.shape} does not match normals {n.shape[:2]}")
        norms = np.linalg.norm(n[v], axis=-1)
        if norms.size and np.any(np.abs(norms - 1.0) > 1e-6):
            raise DataError("valid normals must be unit length (tolerance 1e-6)")
        if norms.size and np.any(n[v][:, 2] < 0):
            raise DataError("valid normals must face the camera (n_z >= 0)")
        n = np.where(v[:, :, None], n, 0.0)
        n = np.ascontiguousarray(n)
        v = np.ascontiguousarray(v)
        n.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "valid", v)
        if self.flipped is not None:
            f = np.ascontiguousarray(np.asarray(self.flipped, dtype=bool))
            if f.shape != v.shape:
                raise DataError("flipped raster shape mismatch")
            f.setflags(write=False)
            object.__setattr__(self, "flipped", f)

    @property
    def height(self) -> int:
        return self.normals.shape[0]

    @property
    def width(self) -> int:
        return self.normals.shape[1]


@dataclass(frozen=True)
class AlbedoMap:
    """Per-pixel non-negative reflectance, 1 or 3 channels, relative units."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 3):
            raise DataError(f"albedo must be (H, W, 1|3), got {a.shape}")
        if v.shape != a.shape[:2]:
            raise DataError("albedo valid mask shape mismatch")
        if not np.all(np.isfinite(a)):
            raise DataError("albedo must be finite")
        if a.min() < 0:
            raise DataError("albedo must be non-negative")
        a = np.ascontiguousarray(a)
        v = np.ascontiguousarray(v)
        a.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "values", a)
        object.__setattr__(self, "valid", v)

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def _check_inputs(stack: ImageStack, lights: LightSet, min_images: int):
    if len(stack) != len(lights):
        raise DataError(f"stack has {len(stack)} images but light set has {len(lights)}")
    if len(stack) < min_images:
        raise DataError(f"need at least {min_images} images, got {len(stack)}")
    require_rank3(lights)


def _solve_pixels(A: np.ndarray, lum: np.ndarray, weights: np.ndarray):
    """Weighted least squares m = argmin sum_j w_j (lum_j - A_j . m)^2, batched.

    A is (k, 3), lum and weights are (k, P). Returns (m, solvable) with m of
    shape (P, 3); pixels whose 3x3 normal matrix is rank-deficient get
    solvable = False.
    """
    G = np.einsum("ka,kb,kp->pab", A, A, weights, optimize=True)
    r = np.einsum("ka,kp,kp->pa", A, weights, lum, optimize=True)
    eigs = np.linalg.eigvalsh(G)
    solvable = eigs[:, 0] > COND_GATE * np.maximum(eigs[:, -1], 0)
    m = np.zeros((G.shape[0], 3))
    if np.any(solvable):
        m[solvable] = np.linalg.solve(G[solvable], r[solvable, :, None])[:, :, 0]
    return m, solvable


def _finalize(stack, lights, A, lum, weights, m, solvable):
    """Turn raw solutions into (NormalField, AlbedoMap) on the stack's grid."""
    h, w = stack.height, stack.width
    mask = stack.mask
    mag = np.linalg.norm(m, axis=1)
    ok = solvable & (mag >= MIN_ALBEDO)

    n = np.zeros_like(m)
    n[ok] = m[ok] / mag[ok, None]
    flipped_px = ok & (n[:, 2] < 0)

    # Per-channel magnitude refit with the direction held fixed. Uses the
    # pre-flip normal so the closed form stays consistent with the solve.
    shading = np.einsum("ka,pa->kp", A, n, optimize=True)  # (k, P)
    values = stack.values()[:, mask, :]  # (k, P, C)
    num = np.einsum("kp,kp,kpc->pc", weights, shading, values, optimize=True)
    den = np.einsum("kp,kp,kp->p", weights, shading, shading, optimize=True)
    rho = np.zeros_like(num)
    pos = den > 0
    rho[pos] = num[pos] / den[pos, None]
    rho = np.maximum(rho, 0.0)

    n[flipped_px] = -n[flipped_px]
    if np.any(flipped_px):
        logger.info("flipped %d camera-averted normals", int(flipped_px.sum()))

    normals = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)
    flipped = np.zeros((h, w), dtype=bool)
    albedo = np.zeros((h, w, values.shape[2]))
    normals[mask] = np.where(ok[:, None], n, 0.0)
    valid[mask] = ok
    flipped[mask] = flipped_px
    albedo[mask] = np.where(ok[:, None], rho, 0.0)
    return (
        NormalField(normals, valid, flipped),
        AlbedoMap(albedo, valid.copy()),
    )


def solve_lambertian(stack: ImageStack, lights: LightSet):
    """Recover (NormalField, AlbedoMap) by per-pixel linear least squares.

    Saturated observations (any channel >= 0.995 of full scale) are excluded
    before the solve; pixels left with fewer than 3 usable observations, a
    rank-deficient local system, or |m| < 1e-6 are marked invalid.
    """
    _check_inputs(stack, lights, 3)
    A = lights.intensities[:, None] * lights.directions  # rows phi_j * l_j
    mask = stack.mask
    values = stack.values()[:, mask, :]  # (k, P, C)
    lum = values.mean(axis=2)
    usable = ~np.any(values >= SATURATION_LEVEL, axis=2)  # (k, P)
    weights = usable.astype(np.float64)
    enough = usable.sum(axis=0) >= 3
    m, solvable = _solve_pixels(A, lum, weights)
    return _finalize(stack, lights, A, lum, weights, m, solvable & enough)


def solve_robust(stack: ImageStack, lights: LightSet, trim=DEFAULT_TRIM):
    """Trimmed least squares: iteratively drop suspected shadows and highlights.

    Per pixel, the observations with the lowest `trim[0]` fraction of signed
    residuals (too dark: cast-shadow candidates) and the highest `trim[1]`
    fraction (too bright: specular candidates) are discarded and the solve
    repeats, up to 5 iterations or until the kept set stops changing.
    """
    low, high = float(trim[0]), float(trim[1])
    if not (0 <= low < 1 and 0 <= high < 1):
        raise ConfigError(f"trim fractions must lie in [0, 1), got {trim}")
    _check_inputs(stack, lights, 6)
    k = len(stack)
    if k - int(low * k) - int(high * k) < 3:
        raise DataError(f"trim {trim} leaves fewer than 3 of {k} observations")

    A = lights.intensities[:, None] * lights.directions
    mask = stack.mask
    values = stack.values()[:, mask, :]
    lum = values.mean(axis=2)
    usable = ~np.any(values >= SATURATION_LEVEL, axis=2)

    # Trim counts come from each pixel's usable count, not the nominal k.
    k_usable = usable.sum(axis=0)
    k_low = np.floor(low * k_usable).astype(int)
    k_high = np.floor(high * k_usable).astype(int)
    enough = (k_usable - k_low - k_high) >= 3

    kept = usable.copy()
    for _ in range(MAX_TRIM_ITERATIONS):
        m, _solvable = _solve_pixels(A, lum, kept.astype(np.float64))
        resid = lum - np.einsum("ka,pa->kp", A, m, optimize=True)
        resid[~usable] = np.inf  # rank unusable observations last
        order = np.argsort(resid, axis=0, kind="stable")
        ranks = np.argsort(order, axis=0, kind="stable")
        new_kept = usable & (ranks >= k_low[None, :]) & (ranks < (k_usable - k_high)[None, :])
        if np.array_equal(new_kept, kept):
            break
        kept = new_kept
    weights = kept.astype(np.float64)
    m, solvable = _solve_pixels(A, lum, weights)
    return _finalize(stack, lights, A, lum, weights, m, solvable & enough)


# ---------------------------------------------------------------------------
# RGB encoding of normal fields: channel = (component + 1) / 2.

def encode_normals_rgb(normals: NormalField) -> RasterImage:
    """Map normals to RGB in [0, 1]; invalid pixels become (0, 0, 0)."""
    rgb = (normals.normals + 1.0) / 2.0
    rgb = np.where(normals.valid[:, :, None], rgb, 0.0)
    return RasterImage(rgb)


def decode_normals_rgb(image: RasterImage) -> NormalField:
    """Invert encode_normals_rgb, renormalizing against quantization error.

    Pixels stored as exact (0,0,0) are the invalid sentinel; pixels whose
    decoded vector has norm < 0.5 are treated as corrupt and also marked
    invalid (counted in the log).
    """
    if image.channels != 3:
        raise DataError("normal decoding needs a 3-channel raster")
    if image.data.max() > 1.0:
        raise DataError("encoded normals must lie in [0, 1]")
    sentinel = np.all(image.data == 0.0, axis=2)
    vec = image.data * 2.0 - 1.0
    norm = np.linalg.norm(vec, axis=2)
    corrupt = ~sentinel & (norm < 0.5)
    if np.any(corrupt):
        logger.warning("%d corrupt normal pixels decoded as invalid", int(corrupt.sum()))
    valid = ~sentinel & ~corrupt
    normals = np.zeros_like(vec)
    normals[valid] = vec[valid] / norm[valid, None]
    # Quantization can nudge a grazing normal just below the horizon;
    # reflecting z preserves the norm.
    normals[:, :, 2] = np.abs(normals[:, :, 2])
    return NormalField(normals, valid)

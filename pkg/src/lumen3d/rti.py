"""Polynomial texture maps: per-pixel biquadratic luminance plus static chroma.

Each pixel stores six coefficients a0..a5 of the basis
(lu^2, lv^2, lu*lv, lu, lv, 1) in the light direction's in-plane components
(lu, lv) = (l_x, l_y), and a static unit-mean chroma triple. Evaluating the
polynomial at a new light direction and clamping at zero gives interpolated
relighting; the polynomial's maximum over the unit disk approximates the
surface normal.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .imagery import (
    SATURATION_LEVEL,
    ImageStack,
    RasterImage,
    load_mask,
    read_pfm,
    save_mask,
    write_pfm,
)
from .lightcal import LightSet
from .psolve import NormalField

logger = logging.getLogger(__name__)

BASIS_NAME = "ptm6-lrgb"
SHADOW_LEVEL = 0.02   # raw luminance below this is treated as shadowed
SHADOW_WEIGHT = 0.1   # down-weight, do not drop: keeps fits conditioned
COND_GATE = 1e-12


@dataclass(frozen=True)
class PTMModel:
    """Fitted per-pixel relighting model.

    coeffs: (H, W, 6) luminance polynomial coefficients.
    chroma: (H, W, 3) static color ratios, mean(r,g,b) = 1 on valid pixels.
    fit_rmse: (H, W) weighted luminance fit residual, 0 where invalid.
    """

    coeffs: np.ndarray
    chroma: np.ndarray
    valid: np.ndarray
    fit_rmse: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        ch = np.asarray(self.chroma, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if c.ndim != 3 or c.shape[2] != 6:
            raise DataError(f"coefficients must be (H, W, 6), got {c.shape}")
        if ch.shape != c.shape[:2] + (3,):
            raise DataError(f"chroma must be (H, W, 3), got {ch.shape}")
        if v.shape != c.shape[:2]:
            raise DataError("valid mask shape mismatch")
        if not np.all(np.isfinite(c[v])):
            raise DataError("coefficients must be finite on valid pixels")
        if v.any():
            if ch[v].min() < 0:
                raise DataError("chroma must be non-negative")
            if np.any(np.abs(ch[v].mean(axis=-1) - 1.0) > 1e-6):
                raise DataError("chroma must have unit mean per pixel")
        rmse = self.fit_rmse
        rmse = np.zeros(v.shape) if rmse is None else np.asarray(rmse, dtype=np.float64)
        if rmse.shape != v.shape:
            raise DataError("fit_rmse shape mismatch")
        arrays = {"coeffs": c, "chroma": ch, "valid": v, "fit_rmse": rmse}
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def height(self) -> int:
        return self.coeffs.shape[0]

    @property
    def width(self) -> int:
        return self.coeffs.shape[1]


def ptm_basis(lu, lv) -> np.ndarray:
    """Rows of the design matrix: (lu^2, lv^2, lu*lv, lu, lv, 1)."""
    lu = np.asarray(lu, dtype=np.float64)
    lv = np.asarray(lv, dtype=np.float64)
    return np.stack(
        [lu * lu, lv * lv, lu * lv, lu, lv, np.ones_like(lu)], axis=-1
    )


def fit_ptm(stack: ImageStack, lights: LightSet) -> PTMModel:
    """Weighted per-pixel least-squares fit of the 6-term model.

    The fitted luminance observation is channel mean divided by the light
    intensity. Saturated observations get weight 0, shadowed ones (raw
    luminance below 0.02) weight 0.1, the rest weight 1. Chroma is the mean
    per-channel ratio to luminance over the weight-1 observations.
    """
    if len(stack) != len(lights):
        raise DataError(f"stack has {len(stack)} images but light set has {len(lights)}")
    if len(stack) < 6:
        raise DataError(f"PTM fitting needs at least 6 lights, got {len(stack)}")
    B = ptm_basis(lights.directions[:, 0], lights.directions[:, 1])  # (k, 6)
    sv = np.linalg.svd(B, compute_uv=False)
    if sv[-1] < 1e-9 * sv[0]:
        raise DataError(
            "light directions are degenerate for PTM fitting "
            "(design matrix rank < 6; e.g. all lights on one azimuth line)"
        )

    mask = stack.mask
    values = stack.values()[:, mask, :]          # (k, P, C)
    raw_lum = values.mean(axis=2)                # (k, P)
    lum = raw_lum / lights.intensities[:, None]  # fitted observations

    saturated = np.any(values >= SATURATION_LEVEL, axis=2)
    shadowed = raw_lum < SHADOW_LEVEL
    W = np.where(saturated, 0.0, np.where(shadowed, SHADOW_WEIGHT, 1.0))

    G = np.einsum("ka,kb,kp->pab", B, B, W, optimize=True)
    r = np.einsum("ka,kp,kp->pa", B, W, lum, optimize=True)
    eigs = np.linalg.eigvalsh(G)
    solvable = eigs[:, 0] > COND_GATE * np.maximum(eigs[:, -1], 0)
    a = np.zeros((G.shape[0], 6))
    if np.any(solvable):
        a[solvable] = np.linalg.solve(G[solvable], r[solvable, :, None])[:, :, 0]

    pred = np.einsum("ka,pa->kp", B, a, optimize=True)
    wsum = W.sum(axis=0)
    rmse_flat = np.zeros(wsum.shape)
    pos = wsum > 0
    rmse_flat[pos] = np.sqrt(
        np.sum(W * (pred - lum) ** 2, axis=0)[pos] / wsum[pos]
    )

    # Static chroma from clean observations only; gray stacks get (1,1,1).
    chroma_flat = np.ones((lum.shape[1], 3))
    if stack.channels == 3:
        clean = (W >= 1.0) & (raw_lum > 0)
        n_clean = clean.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = values / raw_lum[:, :, None]
        ratio = np.where(clean[:, :, None], ratio, 0.0)
        has = n_clean > 0
        chroma_flat[has] = ratio.sum(axis=0)[has] / n_clean[has, None]
        mean = chroma_flat.mean(axis=1)
        ok_mean = mean > 0
        chroma_flat[ok_mean] /= mean[ok_mean, None]
        chroma_flat[~ok_mean] = 1.0

    h, w = mask.shape
    coeffs = np.zeros((h, w, 6))
    chroma = np.ones((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)
    rmse = np.zeros((h, w))
    coeffs[mask] = np.where(solvable[:, None], a, 0.0)
    chroma[mask] = np.where(solvable[:, None], chroma_flat, 1.0)
    valid[mask] = solvable
    rmse[mask] = np.where(solvable, rmse_flat, 0.0)
    return PTMModel(coeffs, chroma, valid, rmse)


def eval_ptm(model: PTMModel, light) -> RasterImage:
    """Relight the model: channel c = max(0, polynomial(lu, lv)) * chroma_c."""
    light = np.asarray(light, dtype=np.float64)
    if light.shape != (3,):
        raise ConfigError("light must be a 3-vector")
    if abs(np.linalg.norm(light) - 1.0) > 1e-6:
        raise ConfigError("light must be unit length")
    if light[2] <= 0:
        raise DataError("PTM evaluation needs an upper-hemisphere light (z > 0)")
    b = ptm_basis(light[0], light[1])  # (6,)
    lum = np.maximum(0.0, model.coeffs @ b)
    out = lum[:, :, None] * model.chroma
    out[~model.valid] = 0.0
    return RasterImage(out)


def ptm_to_normals(model: PTMModel) -> NormalField:
    """Normals from the polynomial's maximum over the unit disk.

    The stationary point solves 2*a0*u + a2*v + a3 = 0 and
    a2*u + 2*a1*v + a4 = 0. It counts only when the Hessian is negative
    definite (a true maximum: 2*a0 < 0 and 4*a0*a1 - a2^2 > 0) and the point
    lies strictly inside the unit disk; other pixels are marked invalid.
    """
    a = model.coeffs
    a0, a1, a2, a3, a4 = (a[:, :, i] for i in range(5))
    det = 4 * a0 * a1 - a2 * a2
    neg_definite = (2 * a0 < 0) & (det > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (a2 * a4 - 2 * a1 * a3) / det
        v = (a2 * a3 - 2 * a0 * a4) / det
    rr = u * u + v * v
    valid = model.valid & neg_definite & (rr < 1.0) & np.isfinite(rr)
    normals = np.zeros(a.shape[:2] + (3,))
    nz = np.sqrt(np.maximum(0.0, 1.0 - rr))
    normals[:, :, 0] = np.where(valid, u, 0.0)
    normals[:, :, 1] = np.where(valid, v, 0.0)
    normals[:, :, 2] = np.where(valid, nz, 0.0)
    frac = 1.0 - valid.sum() / max(1, model.valid.sum())
    if frac > 0:
        logger.info("%.1f%% of fitted pixels have no usable maximum", 100 * frac)
    return NormalField(normals, valid)


# ---------------------------------------------------------------------------
# Archive layout: two 3-channel coefficient PFMs + chroma PFM + mask + JSON.

def save_ptm(model: PTMModel, directory) -> None:
    """Write the model as a directory archive (the viewer's input contract)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_pfm(model.coeffs[:, :, 0:3], d / "coeffs_012.pfm")
    write_pfm(model.coeffs[:, :, 3:6], d / "coeffs_345.pfm")
    write_pfm(model.chroma, d / "chroma.pfm")
    save_mask(model.valid, d / "mask.png")
    desc = {"basis": BASIS_NAME, "width": model.width, "height": model.height}
    with open(d / "ptm.json", "w") as f:
        json.dump(desc, f, indent=2)
        f.write("\n")


def load_ptm(directory) -> PTMModel:
    """Read an archive written by save_ptm."""
    d = Path(directory)
    try:
        with open(d / "ptm.json") as f:
            desc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{d}: unreadable PTM descriptor: {exc}") from exc
    if desc.get("basis") != BASIS_NAME:
        raise DataError(f"{d}: unsupported PTM basis {desc.get('basis')!r}")
    c012 = read_pfm(d / "coeffs_012.pfm")
    c345 = read_pfm(d / "coeffs_345.pfm")
    chroma = read_pfm(d / "chroma.pfm")
    valid = load_mask(d / "mask.png")
    coeffs = np.concatenate([c012, c345], axis=2)
    if (desc.get("height"), desc.get("width")) != coeffs.shape[:2]:
        raise DataError(f"{d}: descriptor dimensions disagree with coefficient rasters")
    coeffs[~valid] = 0.0
    chroma[~valid] = 1.0
    return PTMModel(coeffs, chroma, valid)

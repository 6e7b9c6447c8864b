"""Core raster types, coordinate conventions, linearization, and file I/O.

Conventions used throughout the toolkit:

* Rasters are numpy arrays of shape (height, width, channels), row 0 at the
  image top, channels 1 (gray) or 3 (RGB). Values are linear radiance in
  relative units.
* The camera frame is right-handed with x pointing image-right, y image-up,
  and z toward the viewer. Pixel (row, col) maps to (x, y) =
  (col, height - 1 - row). Beware: most raster code assumes y grows downward;
  here it does not.
* PNG files carry display-range data ([0, 1] after normalization); PFM files
  carry raw float32 data and are the archival format for quantitative maps.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

SATURATION_LEVEL = 0.995  # fraction of full scale above which a sample counts as clipped


def srgb_to_linear(values: np.ndarray) -> np.ndarray:
    """Apply the inverse sRGB transfer function to values in [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


@dataclass(frozen=True)
class RasterImage:
    """A linear-radiance raster, shape (height, width, channels).

    Data is finite and non-negative; instances are immutable and safe to
    share across threads.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise DataError(f"raster must have 1 or 3 channels, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("raster contains non-finite values")
        if arr.min() < 0:
            raise DataError("raster contains negative radiance")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def luminance(self) -> np.ndarray:
        """Channel mean, shape (height, width)."""
        return self.data.mean(axis=2)


@dataclass(frozen=True)
class ImageStack:
    """Co-registered images of one fixed pose under k different lights.

    Pixel (r, c) addresses the same scene point in every image. The mask
    marks pixels that participate in solves and error metrics.
    """

    images: tuple
    mask: np.ndarray
    pose_id: str = ""

    def __post_init__(self):
        images = tuple(self.images)
        if len(images) < 1:
            raise DataError("stack needs at least one image")
        h, w, c = images[0].data.shape
        for j, img in enumerate(images):
            if img.data.shape != (h, w, c):
                raise DataError(
                    f"image {j} has shape {img.data.shape}, expected {(h, w, c)}"
                )
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (h, w):
            raise DataError(f"mask shape {mask.shape} does not match images {(h, w)}")
        mask = np.ascontiguousarray(mask)
        mask.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "mask", mask)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def height(self) -> int:
        return self.images[0].height

    @property
    def width(self) -> int:
        return self.images[0].width

    @property
    def channels(self) -> int:
        return self.images[0].channels

    def luminances(self) -> np.ndarray:
        """Stacked channel-mean luminances, shape (k, height, width)."""
        return np.stack([img.luminance() for img in self.images])

    def values(self) -> np.ndarray:
        """Stacked raw values, shape (k, height, width, channels)."""
        return np.stack([img.data for img in self.images])


# ---------------------------------------------------------------------------
# PFM: float32 raster, little-endian, rows stored bottom-to-top.

def write_pfm(array: np.ndarray, path) -> None:
    """Write a float raster (H, W) or (H, W, 1|3) as a little-endian PFM."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise DataError(f"PFM supports 1 or 3 channels, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("PFM payload must be finite")
    magic = b"PF" if arr.shape[2] == 3 else b"Pf"
    h, w = arr.shape[:2]
    payload = np.flipud(arr)  # PFM convention: bottom row first
    if payload.dtype.byteorder == ">":
        payload = payload.astype("<f4")
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")  # negative scale marks little-endian
        f.write(np.ascontiguousarray(payload).tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float64 array of shape (H, W, channels)."""
    with open(path, "rb") as f:
        raw = f.read()
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", raw)
    if m is None:
        raise DataError(f"{path}: not a valid PFM header")
    channels = 3 if m.group(1) == b"PF" else 1
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(raw[m.end():], dtype=dtype)
    if data.size != w * h * channels:
        raise DataError(f"{path}: payload has {data.size} floats, expected {w * h * channels}")
    arr = data.reshape(h, w, channels).astype(np.float64)
    arr = np.flipud(arr).copy()
    if np.isnan(arr).any():
        raise DataError(f"{path}: NaN in PFM input")
    if np.isinf(arr).any():
        raise DataError(f"{path}: non-finite value in PFM input")
    if abs(scale) != 1.0:
        arr *= abs(scale)
    return arr


# ---------------------------------------------------------------------------
# PNG via OpenCV (handles 8/16-bit gray and RGB in both directions).

def _read_png(path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DataError(f"{path}: unreadable image file")
    if raw.dtype == np.uint8:
        full = 255.0
    elif raw.dtype == np.uint16:
        full = 65535.0
    else:
        raise DataError(f"{path}: unsupported bit depth {raw.dtype}")
    if raw.ndim == 2:
        codes = raw[:, :, None]
    elif raw.ndim == 3 and raw.shape[2] == 3:
        codes = raw[:, :, ::-1]  # BGR -> RGB
    else:
        nchan = raw.shape[2] if raw.ndim == 3 else raw.ndim
        raise DataError(f"{path}: unsupported channel count {nchan}")
    return codes.astype(np.float64) / full


def load_image(path, colorspace: str = "auto") -> RasterImage:
    """Load a PNG or PFM file as linear radiance.

    PNG codes are normalized to [0, 1]; with colorspace "srgb" they are then
    linearized through the inverse sRGB transfer function. PFM files are
    linear by definition and reject an explicit "srgb" request. The default
    "auto" resolves to srgb for PNG and linear for PFM.
    """
    if colorspace not in ("auto", "linear", "srgb"):
        raise ConfigError(f"unknown colorspace {colorspace!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    is_pfm = path.suffix.lower() == ".pfm" or path.read_bytes()[:2] in (b"PF", b"Pf")
    if is_pfm:
        if colorspace == "srgb":
            raise ConfigError(f"{path}: PFM input is linear; srgb linearization does not apply")
        return RasterImage(read_pfm(path))
    values = _read_png(path)
    if colorspace in ("srgb", "auto"):
        values = srgb_to_linear(values)
    return RasterImage(values)


def save_map(image: RasterImage, path, format: str) -> None:
    """Write a raster as 16-bit PNG ("png16") or float PFM ("pfm").

    png16 requires all values in [0, 1] and quantizes by round(v * 65535);
    pfm stores float32 exactly.
    """
    path = Path(path)
    if format == "pfm":
        write_pfm(image.data, path)
        return
    if format != "png16":
        raise ConfigError(f"unknown map format {format!r}")
    data = image.data
    if data.min() < 0.0 or data.max() > 1.0:
        raise DataError("png16 requires values in [0, 1]")
    codes = np.floor(data * 65535.0 + 0.5).astype(np.uint16)
    if codes.shape[2] == 1:
        out = codes[:, :, 0]
    else:
        out = np.ascontiguousarray(codes[:, :, ::-1])  # RGB -> BGR
    if not cv2.imwrite(str(path), out):
        raise DataError(f"{path}: unwritable path")


def load_mask(path) -> np.ndarray:
    """Load an 8-bit validity mask PNG (0 = invalid, 255 = valid)."""
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise DataError(f"{path}: unreadable mask file")
    return raw >= 128


def save_mask(mask: np.ndarray, path) -> None:
    """Write a boolean validity raster as an 8-bit PNG (0/255)."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    if not cv2.imwrite(str(path), arr):
        raise DataError(f"{path}: unwritable path")


def full_mask(height: int, width: int) -> np.ndarray:
    return np.ones((height, width), dtype=bool)

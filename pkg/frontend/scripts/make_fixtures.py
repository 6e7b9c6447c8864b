#!/usr/bin/env python3
"""Regenerate the viewer test fixtures under tests/fixtures/.

Everything the TypeScript tests compare against is produced here by the
capture pipeline (the CLI and its library), so viewer behavior is checked
against real exporter output instead of hand-typed numbers.  Needs the
Python package installed (pip install -e .); run from anywhere:

    python3 frontend/scripts/make_fixtures.py
"""

import json
import shutil
import struct
import subprocess
import sys
import tempfile
from pathlib import Path

import cv2
import jsonschema
import numpy as np

HERE = Path(__file__).resolve().parent
REPO = HERE.parents[1]
FIXTURES = HERE.parent / "tests" / "fixtures"
sys.path.insert(0, str(REPO / "tests"))  # synthetic-scene helpers

import oracles  # noqa: E402
from lumen3d.cli import _viewer_manifest_schema  # noqa: E402
from lumen3d.imagery import RasterImage, save_map, write_pfm  # noqa: E402
from lumen3d.psolve import NormalField, encode_normals_rgb  # noqa: E402
from lumen3d.relight import light_from_angles  # noqa: E402
from lumen3d.rti import eval_ptm, load_ptm  # noqa: E402

# Three viewing states used by the parity tests: varied azimuth, high to
# raking elevation.
ANGLES = [(30.0, 65.0), (140.0, 40.0), (260.0, 20.0)]


def run_cli(*args):
    cmd = [sys.executable, "-m", "lumen3d", *[str(a) for a in args]]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(cmd)} failed:\n{proc.stdout}\n{proc.stderr}")


def make_capture(parent: Path, name: str, asset_id: str) -> Path:
    """Small dome-lit capture.

    Dome directions are exact, so the solve is clean and parity failures
    point at the viewer, not at calibration noise.  The red channel tops
    out at 1.15 to force a non-trivial export exposure.
    """
    root = parent / name
    root.mkdir()
    h, w = 60, 80
    _, zx, zy = oracles.gaussian_surface(h, w)
    normals = oracles.normals_from_gradients(zx, zy)
    x, y = oracles.pixel_xy(h, w)
    albedo = np.stack(
        [0.55 + 0.6 * x / w, 0.7 - 0.25 * y / h, 0.5 + 0.2 * y / h], axis=-1
    )
    lights = np.concatenate(
        [oracles.ring_lights(55, 6, 5.0), oracles.ring_lights(75, 3, 40.0)]
    )
    names = []
    for j, l in enumerate(lights):
        img = oracles.lambert_images(normals, albedo, [l], [1.0])[0]
        fname = f"img_{j:02d}.pfm"
        write_pfm(img, root / fname)
        names.append(fname)
    dome = {
        "dome_id": "fixture-dome-9",
        "leds": [{"dir": [float(v) for v in l], "intensity": 1.0} for l in lights],
    }
    (root / "dome.json").write_text(json.dumps(dome) + "\n")
    job = {
        "images": names,
        "output_dir": "out",
        "dome_manifest": "dome.json",
        "asset_id": asset_id,
    }
    (root / "job.json").write_text(json.dumps(job, indent=2) + "\n")
    return root


def copy_bundle(src: Path, dst: Path):
    shutil.copytree(src, dst)


def cli_bundles(tmp: Path):
    # full bundle plus relight references from the same solve
    root = make_capture(tmp, "full", "fixture-full")
    job = root / "job.json"
    for cmd in ("calibrate", "solve", "fit-ptm", "export-viewer"):
        run_cli(cmd, "--job", job)
    out = root / "out"
    copy_bundle(out / "viewer", FIXTURES / "bundle")

    relight_dir = FIXTURES / "relight"
    relight_dir.mkdir()
    index = []
    for i, (az, el) in enumerate(ANGLES):
        vec = light_from_angles(az, el)
        run_cli(
            "relight", "--job", job, "--force",
            "--light", ",".join(repr(float(v)) for v in vec),
        )
        shutil.copyfile(out / "relight.png", relight_dir / f"relight_{i}.png")
        shutil.copyfile(out / "relight.json", relight_dir / f"relight_{i}.json")
        index.append(
            {
                "azimuth_deg": az,
                "elevation_deg": el,
                "light": [float(v) for v in vec],
                "png": f"relight_{i}.png",
                "json": f"relight_{i}.json",
            }
        )
    (relight_dir / "index.json").write_text(json.dumps(index, indent=2) + "\n")

    # expected PTM frames for the same viewing states, stored as float PFM
    model = load_ptm(out / "ptm")
    truth = FIXTURES / "ptm_truth"
    truth.mkdir()
    tindex = []
    for i, (az, el) in enumerate(ANGLES):
        img = eval_ptm(model, light_from_angles(az, el))
        write_pfm(img.data.astype(np.float32), truth / f"render_{i}.pfm")
        tindex.append(
            {"azimuth_deg": az, "elevation_deg": el, "pfm": f"render_{i}.pfm"}
        )
    (truth / "index.json").write_text(json.dumps(tindex, indent=2) + "\n")

    # single-mode bundles, exported exactly as the CLI builds them
    lam = make_capture(tmp, "lam", "fixture-lambertian")
    for cmd in ("calibrate", "solve", "export-viewer"):
        run_cli(cmd, "--job", lam / "job.json")
    copy_bundle(lam / "out" / "viewer", FIXTURES / "bundle_lambertian")

    ptm = make_capture(tmp, "ptm", "fixture-ptm")
    for cmd in ("calibrate", "fit-ptm", "export-viewer"):
        run_cli(cmd, "--job", ptm / "job.json")
    copy_bundle(ptm / "out" / "viewer", FIXTURES / "bundle_ptm")


def hand_bundle(dst: Path, asset_id: str, normals: np.ndarray, albedo: np.ndarray):
    """Phantom bundle written with the exporter's own encoders."""
    dst.mkdir()
    h, w = normals.shape[:2]
    field = NormalField(normals.astype(np.float64), np.ones((h, w), dtype=bool))
    save_map(encode_normals_rgb(field), dst / "normals_rgb.png", "png16")
    if albedo.ndim == 2:
        albedo = albedo[:, :, None]
    exposure = 1.0 / max(1.0, float(albedo.max()))
    save_map(RasterImage(albedo * exposure), dst / "albedo.png", "png16")
    manifest = {
        "asset_id": asset_id,
        "width": w,
        "height": h,
        "modes": ["lambertian"],
        "exposure": exposure,
    }
    jsonschema.validate(manifest, _viewer_manifest_schema())
    (dst / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def phantom_bundles():
    # flat: every normal straight up, constant gray albedo
    flat_normals = np.zeros((8, 8, 3))
    flat_normals[:, :, 2] = 1.0
    hand_bundle(FIXTURES / "flat", "fixture-flat", flat_normals, np.full((8, 8), 0.6))

    # grooved phantom: raking light should raise contrast sharply
    normals, albedo = oracles.v_groove_normals(48, 64, 8, np.tan(np.radians(30.0)))
    hand_bundle(FIXTURES / "groove", "fixture-groove", normals, albedo)


def codec_fixtures():
    """Raw-value references for the PNG and PFM readers."""
    d = FIXTURES / "codec"
    d.mkdir()
    rng = np.random.default_rng(20260814)
    values = {}

    rgb = rng.uniform(0.0, 1.0, (6, 5, 3))
    save_map(RasterImage(rgb), d / "rgb16.png", "png16")
    values["rgb16.png"] = {
        "codes": np.floor(rgb * 65535.0 + 0.5).astype(int).tolist(),
    }

    gray = rng.uniform(0.0, 1.0, (4, 7, 1))
    save_map(RasterImage(gray), d / "gray16.png", "png16")
    values["gray16.png"] = {
        "codes": np.floor(gray * 65535.0 + 0.5).astype(int).tolist(),
    }

    gray8 = rng.integers(0, 256, (5, 6), dtype=np.uint8)
    assert cv2.imwrite(str(d / "gray8.png"), gray8)
    values["gray8.png"] = {"codes": gray8[:, :, None].astype(int).tolist()}

    rgba8 = rng.integers(0, 256, (3, 9, 4), dtype=np.uint8)
    assert cv2.imwrite(str(d / "rgba8.png"), rgba8[:, :, [2, 1, 0, 3]])
    values["rgba8.png"] = {"codes": rgba8.astype(int).tolist()}

    floats = rng.normal(0.0, 2.0, (4, 6, 3)).astype(np.float32)
    write_pfm(floats, d / "rgb.pfm")
    values["rgb.pfm"] = {"values": floats.astype(float).tolist()}

    grayf = rng.normal(0.0, 1.0, (3, 4, 1)).astype(np.float32)
    write_pfm(grayf, d / "gray.pfm")
    values["gray.pfm"] = {"values": grayf.astype(float).tolist()}

    # variants the exporter never writes but the format allows: big-endian
    # payload (positive scale) and a non-unit gain
    be = rng.normal(0.0, 1.0, (3, 2)).astype(np.float32)
    rows = [be[r] for r in range(3 - 1, -1, -1)]  # bottom-up
    payload = b"".join(struct.pack(">f", float(v)) for row in rows for v in row)
    (d / "bigendian.pfm").write_bytes(b"Pf\n2 3\n2.5\n" + payload)
    values["bigendian.pfm"] = {"values": (be[:, :, None] * 2.5).astype(float).tolist()}

    (d / "values.json").write_text(json.dumps(values) + "\n")


def main():
    if FIXTURES.exists():
        shutil.rmtree(FIXTURES)
    FIXTURES.mkdir(parents=True)
    with tempfile.TemporaryDirectory() as tmp:
        cli_bundles(Path(tmp))
    phantom_bundles()
    codec_fixtures()
    total = sum(p.stat().st_size for p in FIXTURES.rglob("*") if p.is_file())
    print(f"fixtures written to {FIXTURES} ({total / 1024:.0f} KiB)")


if __name__ == "__main__":
    main()

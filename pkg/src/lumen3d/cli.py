"""Batch pipeline driver: one executable, one JSON job file per dataset.

Subcommands wire the library stages end to end and leave a self-describing
output directory behind: artifacts plus a run.json with the tool version,
a hash of the job configuration, and per-stage wall times. Exit codes:
0 success, 2 bad configuration, 3 bad data.
"""

import os

# Cap numeric thread pools before numpy loads them; must happen at import
# time because BLAS reads these variables once.
_threads = os.environ.get("LUMEN3D_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(_var, _threads)

import hashlib
import json
import logging
import shutil
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, DataError, Lumen3DError
from .imagery import (
    ImageStack,
    RasterImage,
    full_mask,
    load_image,
    load_mask,
    read_pfm,
    save_map,
    save_mask,
    write_pfm,
)
from .lightcal import (
    LightSet,
    SphereAnnotation,
    calibrate_with_report,
    load_dome_manifest,
    load_lights,
    save_lights,
)
from .psolve import AlbedoMap, NormalField, encode_normals_rgb, solve_lambertian, solve_robust
from .integrate import export_mesh, integrate_normals
from .relight import raking_sweep, relight_lambertian
from .rti import fit_ptm, load_ptm, save_ptm

logger = logging.getLogger(__name__)

LOCK_NAME = ".lumen3d.lock"

_KNOWN_KEYS = {
    "images",
    "colorspace",
    "mask",
    "spheres",
    "dome_manifest",
    "solver",
    "trim",
    "region",
    "pixel_pitch",
    "asset_id",
    "output_dir",
}


@dataclass
class JobConfig:
    """Parsed and path-resolved job description."""

    images: list
    output_dir: Path
    colorspace: str = "auto"
    mask: Path = None
    spheres: list = field(default_factory=list)
    dome_manifest: Path = None
    solver: str = "lambertian"
    trim: tuple = (0.15, 0.10)
    region: object = None
    pixel_pitch: float = None
    asset_id: str = "asset"
    config_hash: str = ""


def load_job(path) -> JobConfig:
    path = Path(path)
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read job file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: job file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: job file must be a JSON object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown job keys: {sorted(unknown)}")
    for key in ("images", "output_dir"):
        if key not in raw:
            raise ConfigError(f"{path}: job file is missing {key!r}")
    if not isinstance(raw["images"], list) or not raw["images"]:
        raise ConfigError(f"{path}: 'images' must be a non-empty ordered list")

    base = path.parent
    cfg = JobConfig(
        images=[base / p for p in raw["images"]],
        output_dir=base / raw["output_dir"],
    )
    cfg.colorspace = raw.get("colorspace", "auto")
    if cfg.colorspace not in ("auto", "linear", "srgb"):
        raise ConfigError(f"{path}: colorspace must be auto|linear|srgb")
    if "mask" in raw:
        cfg.mask = base / raw["mask"]
    if "dome_manifest" in raw:
        cfg.dome_manifest = base / raw["dome_manifest"]
    for ann in raw.get("spheres", []):
        try:
            cfg.spheres.append(
                SphereAnnotation(
                    center=tuple(ann["center"]),
                    radius=float(ann["radius"]),
                    finish=ann["finish"],
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: malformed sphere annotation: {exc}") from exc
    cfg.solver = raw.get("solver", "lambertian")
    if cfg.solver not in ("lambertian", "robust"):
        raise ConfigError(f"{path}: solver must be lambertian|robust")
    trim = raw.get("trim", [0.15, 0.10])
    if not (isinstance(trim, list) and len(trim) == 2):
        raise ConfigError(f"{path}: trim must be [low, high]")
    cfg.trim = (float(trim[0]), float(trim[1]))
    region = raw.get("region")
    if region is not None:
        if isinstance(region, str):
            cfg.region = base / region
        elif isinstance(region, list) and len(region) == 4:
            cfg.region = [int(x) for x in region]
        else:
            raise ConfigError(f"{path}: region must be [top, left, bottom, right] or a mask path")
    if "pixel_pitch" in raw:
        cfg.pixel_pitch = float(raw["pixel_pitch"])
        if cfg.pixel_pitch <= 0:
            raise ConfigError(f"{path}: pixel_pitch must be positive")
    cfg.asset_id = str(raw.get("asset_id", path.stem))
    cfg.config_hash = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    return cfg


def _require_one_light_source(cfg: JobConfig):
    if cfg.spheres and cfg.dome_manifest:
        raise ConfigError("job specifies both sphere annotations and a dome manifest; pick one")
    if not cfg.spheres and not cfg.dome_manifest:
        raise ConfigError("job needs sphere annotations or a dome manifest for light calibration")


def load_stack(cfg: JobConfig) -> ImageStack:
    images = []
    for p in cfg.images:
        images.append(load_image(p, cfg.colorspace))
    if cfg.mask is not None:
        mask = load_mask(cfg.mask)
    else:
        mask = full_mask(images[0].height, images[0].width)
    return ImageStack(tuple(images), mask, pose_id=cfg.asset_id)


def resolve_lights(cfg: JobConfig, stack: ImageStack) -> LightSet:
    """lights.json from a previous calibrate run wins; else derive from config."""
    lights_path = cfg.output_dir / "lights.json"
    if lights_path.is_file():
        lights = load_lights(lights_path)
        if len(lights) != len(stack):
            raise DataError(
                f"{lights_path} has {len(lights)} lights but the stack has {len(stack)} images"
            )
        return lights
    _require_one_light_source(cfg)
    if cfg.dome_manifest:
        lights = load_dome_manifest(cfg.dome_manifest)
        if len(lights) != len(stack):
            raise ConfigError(
                f"dome manifest has {len(lights)} LEDs but the job lists "
                f"{len(stack)} images"
            )
        return lights
    logger.info("no lights.json found; calibrating from spheres on the fly")
    lights, _ = calibrate_with_report(stack, cfg.spheres)
    return lights


def resolve_region(cfg: JobConfig, shape) -> np.ndarray:
    if cfg.region is None:
        return np.ones(shape, dtype=bool)
    if isinstance(cfg.region, Path):
        region = load_mask(cfg.region)
        if region.shape != shape:
            raise DataError(
                f"region mask shape {region.shape} does not match images {shape}"
            )
        return region
    top, left, bottom, right = cfg.region
    if not (0 <= top < bottom <= shape[0] and 0 <= left < right <= shape[1]):
        raise ConfigError(
            f"region rectangle {cfg.region} does not fit in image of shape {shape}"
        )
    region = np.zeros(shape, dtype=bool)
    region[top:bottom, left:right] = True
    return region


# ---------------------------------------------------------------------------
# Artifact plumbing shared between stages.

def _load_normals(outdir: Path) -> NormalField:
    path = outdir / "normals.pfm"
    if not path.is_file():
        raise DataError(f"{path}: missing; run `solve` first")
    n = read_pfm(path)
    norms = np.linalg.norm(n, axis=2)
    valid = norms > 0.5
    n[valid] /= norms[valid, None]
    n[~valid] = 0.0
    n[:, :, 2] = np.abs(n[:, :, 2])
    return NormalField(n, valid)


def _load_albedo(outdir: Path) -> AlbedoMap:
    path = outdir / "albedo.pfm"
    if not path.is_file():
        raise DataError(f"{path}: missing; run `solve` first")
    a = read_pfm(path)
    valid = np.any(a > 0, axis=2)
    return AlbedoMap(np.maximum(a, 0.0), valid)


def _albedo_exposure(albedo_values: np.ndarray) -> float:
    return 1.0 / max(1.0, float(albedo_values.max()))


# ---------------------------------------------------------------------------
# Stages. Each returns a dict of extra facts recorded in run.json.

def stage_calibrate(cfg: JobConfig) -> dict:
    _require_one_light_source(cfg)
    if cfg.dome_manifest:
        lights = load_dome_manifest(cfg.dome_manifest)
        if len(lights) != len(cfg.images):
            raise ConfigError(
                f"dome manifest has {len(lights)} LEDs but the job lists "
                f"{len(cfg.images)} images"
            )
        report = {"source": "dome", "led_count": len(lights)}
    else:
        stack = load_stack(cfg)
        lights, report = calibrate_with_report(stack, cfg.spheres)
        report["source"] = "spheres"
    save_lights(lights, cfg.output_dir / "lights.json")
    with open(cfg.output_dir / "calibration_report.json", "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    return {"lights": len(lights)}


def stage_solve(cfg: JobConfig) -> dict:
    stack = load_stack(cfg)
    lights = resolve_lights(cfg, stack)
    if cfg.solver == "robust":
        normals, albedo = solve_robust(stack, lights, cfg.trim)
    else:
        normals, albedo = solve_lambertian(stack, lights)
    out = cfg.output_dir
    write_pfm(normals.normals, out / "normals.pfm")
    save_map(encode_normals_rgb(normals), out / "normals_rgb.png", "png16")
    write_pfm(albedo.values, out / "albedo.pfm")
    exposure = _albedo_exposure(albedo.values)
    save_map(RasterImage(albedo.values * exposure), out / "albedo.png", "png16")
    invalid = int((stack.mask & ~normals.valid).sum())
    return {
        "solver": cfg.solver,
        "trim": list(cfg.trim) if cfg.solver == "robust" else None,
        "invalid_pixels": invalid,
        "albedo_exposure": exposure,
    }


def stage_integrate(cfg: JobConfig) -> dict:
    out = cfg.output_dir
    normals = _load_normals(out)
    region = resolve_region(cfg, normals.normals.shape[:2]) & normals.valid
    if not region.any():
        raise DataError("integration region has no valid pixels")
    depth = integrate_normals(normals, region)
    write_pfm(depth.depth, out / "depth.pfm")
    save_mask(depth.valid, out / "depth_mask.png")
    albedo = _load_albedo(out)
    export_mesh(depth, albedo, out / "mesh.ply", pixel_pitch=cfg.pixel_pitch)
    return {"solver_residual": depth.solver_residual, "pixels": int(depth.valid.sum())}


def stage_relight(cfg: JobConfig, light, intensity: float) -> dict:
    out = cfg.output_dir
    normals = _load_normals(out)
    albedo = _load_albedo(out)
    img = relight_lambertian(normals, albedo, light, intensity)
    exposure = 1.0 / max(1.0, float(img.data.max()))
    save_map(RasterImage(img.data * exposure), out / "relight.png", "png16")
    doc = {
        "light": [float(x) for x in light],
        "intensity": float(intensity),
        "exposure": exposure,
    }
    with open(out / "relight.json", "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    return doc


def stage_sweep(cfg: JobConfig, elevation: float, count: int) -> dict:
    normals = _load_normals(cfg.output_dir)
    albedo = _load_albedo(cfg.output_dir)
    index = raking_sweep(normals, albedo, elevation, count, cfg.output_dir / "sweep")
    return {"elevation_deg": elevation, "count": count, "exposure": index["exposure"]}


def stage_fit_ptm(cfg: JobConfig) -> dict:
    stack = load_stack(cfg)
    lights = resolve_lights(cfg, stack)
    model = fit_ptm(stack, lights)
    save_ptm(model, cfg.output_dir / "ptm")
    valid = model.valid
    median_rmse = float(np.median(model.fit_rmse[valid])) if valid.any() else None
    return {"valid_pixels": int(valid.sum()), "median_fit_rmse": median_rmse}


def _viewer_manifest_schema() -> dict:
    schema_path = Path(__file__).parent / "schemas" / "viewer_manifest.schema.json"
    with open(schema_path) as f:
        return json.load(f)


def stage_export_viewer(cfg: JobConfig) -> dict:
    out = cfg.output_dir
    viewer = out / "viewer"
    viewer.mkdir(parents=True, exist_ok=True)
    modes = []
    width = height = None

    if (out / "normals_rgb.png").is_file() and (out / "albedo.png").is_file():
        shutil.copyfile(out / "normals_rgb.png", viewer / "normals_rgb.png")
        shutil.copyfile(out / "albedo.png", viewer / "albedo.png")
        normals = _load_normals(out)
        width, height = normals.width, normals.height
        modes.append("lambertian")
    if (out / "ptm" / "ptm.json").is_file():
        model = load_ptm(out / "ptm")
        if width is None:
            width, height = model.width, model.height
        elif (model.height, model.width) != (height, width):
            raise DataError("PTM archive dimensions disagree with the normal map")
        if (viewer / "ptm").exists():
            shutil.rmtree(viewer / "ptm")
        shutil.copytree(out / "ptm", viewer / "ptm")
        modes.append("ptm")
    if not modes:
        raise DataError("nothing to export: run `solve` and/or `fit-ptm` first")

    if (out / "albedo.pfm").is_file():
        exposure = _albedo_exposure(read_pfm(out / "albedo.pfm"))
    else:
        exposure = 1.0
    manifest = {
        "asset_id": cfg.asset_id,
        "width": int(width),
        "height": int(height),
        "modes": modes,
        "exposure": exposure,
    }
    jsonschema.validate(manifest, _viewer_manifest_schema())
    with open(viewer / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return {"modes": modes}


# ---------------------------------------------------------------------------
# Command wrapper: lock, overwrite policy, run.json bookkeeping.

# First artifact each stage writes; its presence means "already ran".
_STAGE_MARKERS = {
    "calibrate": "lights.json",
    "solve": "normals.pfm",
    "integrate": "depth.pfm",
    "relight": "relight.png",
    "sweep": "sweep/sweep.json",
    "fit-ptm": "ptm/ptm.json",
    "export-viewer": "viewer/manifest.json",
}


def _update_run_json(cfg: JobConfig, stage: str, wall_time: float, facts: dict, force: bool):
    path = cfg.output_dir / "run.json"
    doc = {"tool": "lumen3d", "version": __version__, "config_hash": cfg.config_hash, "stages": {}}
    if path.is_file():
        try:
            with open(path) as f:
                existing = json.load(f)
        except (OSError, json.JSONDecodeError):
            existing = None
        if existing and existing.get("config_hash") == cfg.config_hash:
            doc["stages"] = existing.get("stages", {})
        elif existing and not force:
            raise ConfigError(
                f"{path} records a different configuration; use --force to overwrite"
            )
    entry = {"wall_time_s": round(wall_time, 4)}
    entry.update({k: v for k, v in facts.items() if v is not None})
    doc["stages"][stage] = entry
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def run_stage(job_path, force: bool, stage: str, runner) -> None:
    cfg = load_job(job_path)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    marker = cfg.output_dir / _STAGE_MARKERS[stage]
    if marker.exists() and not force:
        raise ConfigError(f"{marker} already exists; pass --force to overwrite")

    lock = cfg.output_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(
            f"{cfg.output_dir} is locked by another run ({lock} exists)"
        ) from None
    try:
        os.write(fd, f"pid {os.getpid()}\n".encode())
        os.close(fd)
        start = time.perf_counter()
        facts = runner(cfg)
        wall = time.perf_counter() - start
        _update_run_json(cfg, stage, wall, facts, force)
        logger.info("%s finished in %.2f s", stage, wall)
    finally:
        lock.unlink(missing_ok=True)


def _fail(exc: Lumen3DError, code: int):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _guarded(fn):
    try:
        fn()
    except ConfigError as exc:
        _fail(exc, 2)
    except DataError as exc:
        _fail(exc, 3)
    except Lumen3DError as exc:
        _fail(exc, 3)


def _job_options(fn):
    fn = click.option(
        "--job", "job_path", required=True,
        type=click.Path(exists=True, dir_okay=False),
        help="JSON job description; paths inside are relative to it.",
    )(fn)
    fn = click.option("--force", is_flag=True, help="Overwrite existing stage outputs.")(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="lumen3d")
def main():
    """Surface-capture pipeline: photograph stacks to relightable assets."""
    logging.basicConfig(
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command()
@_job_options
def calibrate(job_path, force):
    """Estimate per-image light directions and intensities."""
    _guarded(lambda: run_stage(job_path, force, "calibrate", stage_calibrate))


@main.command()
@_job_options
def solve(job_path, force):
    """Recover per-pixel normals and albedo from the image stack."""
    _guarded(lambda: run_stage(job_path, force, "solve", stage_solve))


@main.command()
@_job_options
def integrate(job_path, force):
    """Integrate the normal field into a relative depth map and mesh."""
    _guarded(lambda: run_stage(job_path, force, "integrate", stage_integrate))


@main.command()
@_job_options
@click.option("--light", required=True, help="Unit light direction as x,y,z.")
@click.option("--intensity", default=1.0, show_default=True, type=float)
def relight(job_path, force, light, intensity):
    """Render the solved surface under one virtual light."""
    try:
        vec = np.array([float(x) for x in light.split(",")])
        if vec.shape != (3,):
            raise ValueError(vec.shape)
    except ValueError:
        _fail(ConfigError(f"--light must be three comma-separated numbers, got {light!r}"), 2)
    _guarded(lambda: run_stage(
        job_path, force, "relight", lambda cfg: stage_relight(cfg, vec, intensity)
    ))


@main.command()
@_job_options
@click.option("--elevation", required=True, type=float, help="Light elevation in degrees.")
@click.option("--count", required=True, type=int, help="Number of azimuth steps.")
def sweep(job_path, force, elevation, count):
    """Render a raking-light ring around the surface."""
    _guarded(lambda: run_stage(
        job_path, force, "sweep", lambda cfg: stage_sweep(cfg, elevation, count)
    ))


@main.command("fit-ptm")
@_job_options
def fit_ptm_cmd(job_path, force):
    """Fit a polynomial texture map for interpolated relighting."""
    _guarded(lambda: run_stage(job_path, force, "fit-ptm", stage_fit_ptm))


@main.command("export-viewer")
@_job_options
def export_viewer(job_path, force):
    """Bundle solved artifacts for the browser viewer."""
    _guarded(lambda: run_stage(job_path, force, "export-viewer", stage_export_viewer))


if __name__ == "__main__":
    main()

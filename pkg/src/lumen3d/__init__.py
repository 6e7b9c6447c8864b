"""Photometric-stereo and RTI surface-capture toolkit.

Submodules import numpy and friends; they are loaded lazily so that the
command-line entry point can pin thread-pool sizes first.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "RasterImage": "imagery",
    "ImageStack": "imagery",
    "load_image": "imagery",
    "save_map": "imagery",
    "read_pfm": "imagery",
    "write_pfm": "imagery",
    "load_mask": "imagery",
    "save_mask": "imagery",
    "LightSet": "lightcal",
    "SphereAnnotation": "lightcal",
    "calibrate_from_spheres": "lightcal",
    "load_dome_manifest": "lightcal",
    "NormalField": "psolve",
    "AlbedoMap": "psolve",
    "solve_lambertian": "psolve",
    "solve_robust": "psolve",
    "encode_normals_rgb": "psolve",
    "decode_normals_rgb": "psolve",
    "DepthMap": "integrate",
    "integrate_normals": "integrate",
    "export_mesh": "integrate",
    "relight_lambertian": "relight",
    "synthesize_stack": "relight",
    "raking_sweep": "relight",
    "PTMModel": "rti",
    "fit_ptm": "rti",
    "eval_ptm": "rti",
    "ptm_to_normals": "rti",
    "ConfigError": "errors",
    "DataError": "errors",
    "Lumen3DError": "errors",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    return getattr(importlib.import_module(f".{module}", __name__), name)

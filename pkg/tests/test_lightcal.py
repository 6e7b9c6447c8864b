import json
import logging
import math

import numpy as np
import pytest

import oracles
from lumen3d.errors import ConfigError, DataError
from lumen3d.imagery import ImageStack, full_mask
from lumen3d.lightcal import (
    LightSet,
    SphereAnnotation,
    calibrate_from_spheres,
    calibrate_with_report,
    estimate_direction_from_specular_sphere,
    estimate_intensity_from_matte_sphere,
    load_dome_manifest,
    load_lights,
    require_rank3,
    save_lights,
)

CENTER = (60.0, 60.0)
RADIUS = 40.0


def angle_deg(a, b):
    return math.degrees(math.acos(np.clip(np.dot(oracles.unit(a), oracles.unit(b)), -1, 1)))


def specular_image(raster, light, center=CENTER, radius=RADIUS, size=(120, 120), **kw):
    return raster(oracles.specular_sphere_image(size[0], size[1], center, radius, light, **kw))


# ---------------------------------------------------------------------------
# Specular direction estimation

def test_highlight_at_center_is_overhead(raster):
    img = specular_image(raster, [0.0, 0.0, 1.0])
    sphere = SphereAnnotation(CENTER, RADIUS, "specular")
    d = estimate_direction_from_specular_sphere(img, sphere)
    assert angle_deg(d, [0, 0, 1]) < 0.5


def test_highlight_offset_half_sqrt2_radius(raster):
    # blob at (r0, c0 + R/sqrt(2)) means n 45 degrees over, so the light
    # reflects all the way down to the horizon at +x
    img = specular_image(raster, [1.0, 0.0, 0.0], center=(80.0, 80.0), radius=60.0,
                         size=(160, 160))
    sphere = SphereAnnotation((80.0, 80.0), 60.0, "specular")
    d = estimate_direction_from_specular_sphere(img, sphere)
    assert angle_deg(d, [1, 0, 0]) < 0.5


def test_direction_recovery_batch(raster):
    sphere = SphereAnnotation((80.0, 80.0), 60.0, "specular")
    for light in oracles.random_upper_lights(6, seed=5, min_elevation_deg=25.0):
        img = specular_image(raster, light, center=(80.0, 80.0), radius=60.0, size=(160, 160))
        d = estimate_direction_from_specular_sphere(img, sphere)
        assert angle_deg(d, light) < 1.0


def test_direction_exposure_invariant(raster):
    light = oracles.unit([0.4, -0.3, 0.85])
    base = oracles.specular_sphere_image(120, 120, CENTER, RADIUS, light)
    sphere = SphereAnnotation(CENTER, RADIUS, "specular")
    d1 = estimate_direction_from_specular_sphere(raster(base), sphere)
    d2 = estimate_direction_from_specular_sphere(raster(base * 0.5), sphere)
    np.testing.assert_array_equal(d1, d2)


def test_no_highlight_rejected(raster):
    mask, _ = oracles.sphere_geometry(120, 120, CENTER, RADIUS)
    img = raster(np.where(mask, 0.2, 0.0))
    with pytest.raises(DataError):
        estimate_direction_from_specular_sphere(img, SphereAnnotation(CENTER, RADIUS, "specular"))


def test_saturation_warning(raster, caplog):
    mask, _ = oracles.sphere_geometry(120, 120, CENTER, RADIUS)
    rows, cols = np.mgrid[0:120, 0:120]
    body = np.where(mask, 0.1, 0.0)
    body[mask & (rows < 60)] = 1.0  # half the disk clipped
    with caplog.at_level(logging.WARNING, logger="lumen3d.lightcal"):
        estimate_direction_from_specular_sphere(
            raster(body), SphereAnnotation(CENTER, RADIUS, "specular")
        )
    assert any("saturated" in r.message for r in caplog.records)


def test_sphere_must_fit_in_frame(raster):
    img = raster(np.zeros((50, 50)))
    with pytest.raises(ConfigError):
        estimate_direction_from_specular_sphere(
            img, SphereAnnotation((25.0, 25.0), 30.0, "specular")
        )


def test_finish_mismatch(raster):
    img = specular_image(raster, [0, 0, 1])
    with pytest.raises(ConfigError):
        estimate_direction_from_specular_sphere(img, SphereAnnotation(CENTER, RADIUS, "matte"))
    with pytest.raises(ConfigError):
        estimate_intensity_from_matte_sphere(
            img, SphereAnnotation(CENTER, RADIUS, "specular"), np.array([0, 0, 1.0])
        )


def test_annotation_validation():
    with pytest.raises(ConfigError):
        SphereAnnotation(CENTER, RADIUS, "shiny")
    with pytest.raises(ConfigError):
        SphereAnnotation((1.0,), RADIUS, "matte")
    with pytest.raises(ConfigError):
        SphereAnnotation(CENTER, 0.0, "matte")


# ---------------------------------------------------------------------------
# Matte intensity estimation

def test_matte_unit_intensity(raster):
    light = np.array([0.0, 0.0, 1.0])
    img = raster(oracles.matte_sphere_image(120, 120, CENTER, RADIUS, light, phi=1.0))
    phi = estimate_intensity_from_matte_sphere(
        img, SphereAnnotation(CENTER, RADIUS, "matte"), light
    )
    assert abs(phi - 1.0) < 1e-9


def test_matte_intensity_scales(raster):
    # phi small enough that doubling stays below the saturation cutoff,
    # so both fits see the same pixel set
    light = oracles.unit([0.3, 0.2, 0.93])
    base = oracles.matte_sphere_image(120, 120, CENTER, RADIUS, light, phi=0.3)
    ann = SphereAnnotation(CENTER, RADIUS, "matte")
    p1 = estimate_intensity_from_matte_sphere(raster(base), ann, light)
    p2 = estimate_intensity_from_matte_sphere(raster(2.0 * base), ann, light)
    assert abs(p2 - 2.0 * p1) < 1e-9


def test_matte_absorbs_sphere_albedo(raster):
    light = np.array([0.0, 0.0, 1.0])
    img = raster(oracles.matte_sphere_image(120, 120, CENTER, RADIUS, light, phi=2.0, albedo=0.5))
    phi = estimate_intensity_from_matte_sphere(
        img, SphereAnnotation(CENTER, RADIUS, "matte"), light
    )
    assert abs(phi - 1.0) < 1e-9


def test_matte_low_light_still_has_enough_pixels(raster):
    # nearly horizontal light: the lit-and-gated region is still almost half
    # the disk at this radius (2364 of 5025 pixels), so the fit succeeds
    light = np.array([0.98, 0.0, math.sqrt(1 - 0.98**2)])
    assert oracles.matte_gate_count(120, 120, CENTER, RADIUS, light) == 2364
    img = raster(oracles.matte_sphere_image(120, 120, CENTER, RADIUS, light, phi=1.1))
    phi = estimate_intensity_from_matte_sphere(
        img, SphereAnnotation(CENTER, RADIUS, "matte"), light
    )
    assert abs(phi - 1.1) < 1e-9


def test_matte_too_few_usable_pixels(raster):
    light = np.array([0.98, 0.0, math.sqrt(1 - 0.98**2)])
    assert oracles.matte_gate_count(40, 40, (20.0, 20.0), 5.5, light) < 50
    img = raster(oracles.matte_sphere_image(40, 40, (20.0, 20.0), 5.5, light, phi=1.0))
    with pytest.raises(DataError):
        estimate_intensity_from_matte_sphere(
            img, SphereAnnotation((20.0, 20.0), 5.5, "matte"), light
        )


def test_matte_saturated_pixels_excluded(raster):
    light = np.array([0.0, 0.0, 1.0])
    clean = oracles.matte_sphere_image(120, 120, CENTER, RADIUS, light, phi=1.2)
    clipped = np.minimum(clean, 1.0)  # sensor clips the bright crown
    ann = SphereAnnotation(CENTER, RADIUS, "matte")
    phi = estimate_intensity_from_matte_sphere(raster(clipped), ann, light)
    assert abs(phi - 1.2) < 1e-9
    # keeping the clipped pixels in the fit would bias it low
    mask, n = oracles.sphere_geometry(120, 120, CENTER, RADIUS)
    s = np.maximum(0.0, n @ light)[mask]
    naive = np.sum(clipped[mask] * s) / np.sum(s * s)
    assert naive < 1.19


# ---------------------------------------------------------------------------
# Whole-stack calibration

def build_calibration_stack(raster, lights, phis, spec_center=(60.0, 60.0),
                            matte_center=(60.0, 180.0), radius=40.0, size=(120, 240),
                            matte=True, break_image=None):
    h, w = size
    images = []
    for j, (l, phi) in enumerate(zip(lights, phis)):
        img = np.zeros((h, w))
        spec = oracles.specular_sphere_image(h, w, spec_center, radius, l)
        img = np.maximum(img, spec)
        if matte:
            img = np.maximum(
                img, oracles.matte_sphere_image(h, w, matte_center, radius, l, phi=phi)
            )
        if j == break_image:
            mask, _ = oracles.sphere_geometry(h, w, spec_center, radius)
            img[mask] = 0.2  # flat disk, no highlight
        images.append(raster(img))
    return ImageStack(tuple(images), full_mask(h, w))


def annotations(radius=40.0, matte=True):
    anns = [SphereAnnotation((60.0, 60.0), radius, "specular")]
    if matte:
        anns.append(SphereAnnotation((60.0, 180.0), radius, "matte"))
    return anns


def test_calibrate_full_pipeline(raster):
    lights = oracles.random_upper_lights(6, seed=2, min_elevation_deg=35.0)
    phis = np.array([1.0, 0.9, 1.1, 1.05, 0.95, 1.2])
    stack = build_calibration_stack(raster, lights, phis)
    out, report = calibrate_with_report(stack, annotations())
    assert len(out) == 6 and out.rank() == 3
    for est, true in zip(out.directions, lights):
        assert angle_deg(est, true) < 1.0
    np.testing.assert_allclose(out.intensities, phis, rtol=0.01)
    assert len(report["images"]) == 6
    entry = report["images"][0]["spheres"]
    assert {e["finish"] for e in entry} == {"specular", "matte"}
    assert all("fit_rms" in e for e in entry if e["finish"] == "matte")


def test_calibrate_without_matte_warns(raster, caplog):
    lights = oracles.random_upper_lights(4, seed=3, min_elevation_deg=40.0)
    stack = build_calibration_stack(raster, lights, np.ones(4), matte=False)
    with caplog.at_level(logging.WARNING, logger="lumen3d.lightcal"):
        out = calibrate_from_spheres(stack, annotations(matte=False))
    np.testing.assert_array_equal(out.intensities, np.ones(4))
    assert any("matte" in r.message for r in caplog.records)


def test_calibrate_needs_specular(raster):
    lights = oracles.random_upper_lights(3, seed=4)
    stack = build_calibration_stack(raster, lights, np.ones(3))
    with pytest.raises(ConfigError):
        calibrate_with_report(stack, [SphereAnnotation((60.0, 180.0), 40.0, "matte")])


def test_calibrate_needs_three_images(raster):
    lights = oracles.random_upper_lights(2, seed=5)
    stack = build_calibration_stack(raster, lights, np.ones(2))
    with pytest.raises(DataError):
        calibrate_with_report(stack, annotations())


def test_calibrate_error_names_failing_image(raster):
    lights = oracles.random_upper_lights(4, seed=6, min_elevation_deg=40.0)
    stack = build_calibration_stack(raster, lights, np.ones(4), break_image=2)
    with pytest.raises(DataError, match="image 2"):
        calibrate_with_report(stack, annotations())


def test_calibrate_coplanar_lights_rejected(raster):
    # all lights in the xz plane: rank 2, unusable for stereo
    els = [30.0, 50.0, 70.0, 85.0]
    lights = np.array([[math.cos(math.radians(e)), 0.0, math.sin(math.radians(e))] for e in els])
    stack = build_calibration_stack(raster, lights, np.ones(4))
    with pytest.raises(DataError, match="coplanar"):
        calibrate_with_report(stack, annotations())


def test_two_specular_spheres_average(raster):
    lights = oracles.random_upper_lights(3, seed=7, min_elevation_deg=40.0)
    h, w = 120, 240
    c1, c2, radius = (60.0, 60.0), (60.0, 180.0), 40.0
    images = []
    for l in lights:
        img = np.maximum(
            oracles.specular_sphere_image(h, w, c1, radius, l),
            oracles.specular_sphere_image(h, w, c2, radius, l),
        )
        images.append(raster(img))
    stack = ImageStack(tuple(images), full_mask(h, w))
    anns = [
        SphereAnnotation(c1, radius, "specular"),
        SphereAnnotation(c2, radius, "specular"),
    ]
    out, report = calibrate_with_report(stack, anns)
    for est, true in zip(out.directions, lights):
        assert angle_deg(est, true) < 1.0
    for entry in report["images"]:
        for s in entry["spheres"]:
            assert s["angle_to_mean_deg"] < 1.0


# ---------------------------------------------------------------------------
# LightSet and dome manifests

def test_lightset_validation():
    with pytest.raises(DataError):
        LightSet(np.array([[0.0, 0.0, 2.0]]), np.array([1.0]))
    with pytest.raises(DataError):
        LightSet(np.array([[0.0, 0.0, 1.0]]), np.array([0.0]))
    with pytest.raises(DataError):
        LightSet(np.zeros((0, 3)), np.zeros(0))
    ls = LightSet(np.array([[0.0, 0.0, 1.0]]), np.array([2.0]))
    assert len(ls) == 1


def test_rank_and_require_rank3():
    dirs = oracles.ring_lights(45.0, 3)
    full = LightSet(dirs, np.ones(3))
    assert full.rank() == 3
    require_rank3(full)
    coplanar = LightSet(
        np.array([oracles.unit([1, 0, 1]), oracles.unit([-1, 0, 1]), [0, 0, 1.0]]),
        np.ones(3),
    )
    assert coplanar.rank() == 2
    with pytest.raises(DataError):
        require_rank3(coplanar)


def write_manifest(path, leds, dome_id="dome-a"):
    with open(path, "w") as f:
        json.dump({"dome_id": dome_id, "leds": leds}, f)


def test_dome_manifest_round_trip(tmp_path):
    dirs = oracles.ring_dome()
    leds = [{"dir": [float(x) for x in d], "intensity": 1.0 + 0.01 * i}
            for i, d in enumerate(dirs)]
    write_manifest(tmp_path / "dome.json", leds)
    ls = load_dome_manifest(tmp_path / "dome.json")
    assert len(ls) == 105
    np.testing.assert_allclose(np.linalg.norm(ls.directions, axis=1), 1.0, atol=1e-12)
    assert ls.intensities[10] == pytest.approx(1.10)


def test_dome_manifest_renormalizes_small_drift(tmp_path):
    write_manifest(tmp_path / "d.json", [{"dir": [0.0, 0.0, 1.0005], "intensity": 1.0}])
    ls = load_dome_manifest(tmp_path / "d.json")
    np.testing.assert_allclose(ls.directions[0], [0, 0, 1], atol=1e-12)


@pytest.mark.parametrize(
    "led",
    [
        {"dir": [0.0, 0.0, 2.0], "intensity": 1.0},
        {"dir": [1.0, 0.0, 0.0], "intensity": 1.0},
        {"dir": [0.6, 0.0, -0.8], "intensity": 1.0},
        {"dir": [0.0, 0.0, 1.0], "intensity": 0.0},
        {"dir": [0.0, 0.0, 1.0], "intensity": -2.0},
        {"dir": [0.0, 1.0], "intensity": 1.0},
        {"intensity": 1.0},
    ],
)
def test_dome_manifest_rejects_bad_leds(tmp_path, led):
    write_manifest(tmp_path / "bad.json", [led])
    with pytest.raises(DataError):
        load_dome_manifest(tmp_path / "bad.json")


def test_dome_manifest_structure_errors(tmp_path):
    (tmp_path / "x.json").write_text("not json")
    with pytest.raises(DataError):
        load_dome_manifest(tmp_path / "x.json")
    with open(tmp_path / "y.json", "w") as f:
        json.dump({"leds": []}, f)
    with pytest.raises(DataError):
        load_dome_manifest(tmp_path / "y.json")
    with pytest.raises(DataError):
        load_dome_manifest(tmp_path / "missing.json")


def test_save_load_lights_round_trip(tmp_path):
    dirs = oracles.random_upper_lights(7, seed=9)
    ls = LightSet(dirs, np.linspace(0.5, 1.5, 7))
    save_lights(ls, tmp_path / "lights.json")
    back = load_lights(tmp_path / "lights.json")
    np.testing.assert_allclose(back.directions, ls.directions, atol=1e-12)
    np.testing.assert_allclose(back.intensities, ls.intensities, atol=1e-12)


def test_load_lights_malformed(tmp_path):
    (tmp_path / "l.json").write_text('{"lights": [{"dir": [0, 0]}]}')
    with pytest.raises(DataError):
        load_lights(tmp_path / "l.json")

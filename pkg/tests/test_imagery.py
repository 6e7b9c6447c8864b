import numpy as np
import cv2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from lumen3d.errors import ConfigError, DataError
from lumen3d.imagery import (
    SATURATION_LEVEL,
    ImageStack,
    RasterImage,
    full_mask,
    load_image,
    load_mask,
    read_pfm,
    save_map,
    save_mask,
    srgb_to_linear,
    write_pfm,
)


def write_png8(path, codes):
    codes = np.asarray(codes, dtype=np.uint8)
    assert cv2.imwrite(str(path), codes)


# ---------------------------------------------------------------------------
# Transfer function and PNG loading

def test_srgb_code_188(tmp_path):
    # reference value computed from the transfer function directly
    expected = ((188 / 255 + 0.055) / 1.055) ** 2.4
    write_png8(tmp_path / "g.png", np.full((4, 5), 188))
    img = load_image(tmp_path / "g.png")
    assert img.data.shape == (4, 5, 1)
    np.testing.assert_allclose(img.data, expected, atol=1e-12)
    assert abs(img.data[0, 0, 0] - 0.5029) < 1e-3


def test_srgb_endpoints(tmp_path):
    write_png8(tmp_path / "e.png", np.array([[0, 255]], dtype=np.uint8))
    img = load_image(tmp_path / "e.png", "srgb")
    assert img.data[0, 0, 0] == 0.0
    assert img.data[0, 1, 0] == 1.0


def test_linearization_monotone():
    codes = np.arange(256) / 255.0
    lin = srgb_to_linear(codes)
    assert np.all(np.diff(lin) > 0)
    assert lin[0] == 0.0 and lin[-1] == 1.0


def test_srgb_matches_oracle_inverse():
    lin = np.linspace(0.0, 1.0, 97)
    np.testing.assert_allclose(srgb_to_linear(oracles.srgb_encode(lin)), lin, atol=1e-12)


def test_linear_colorspace_png(tmp_path):
    write_png8(tmp_path / "l.png", np.array([[51, 102]], dtype=np.uint8))
    img = load_image(tmp_path / "l.png", "linear")
    np.testing.assert_allclose(img.data[0, :, 0], [51 / 255, 102 / 255], atol=1e-15)


def test_png_rgb_channel_order(tmp_path):
    # one red pixel: loader must undo OpenCV's BGR layout
    rgb = np.zeros((1, 1, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    cv2.imwrite(str(tmp_path / "c.png"), rgb[:, :, ::-1])
    img = load_image(tmp_path / "c.png", "linear")
    np.testing.assert_array_equal(img.data[0, 0], [1.0, 0.0, 0.0])


def test_png_alpha_rejected(tmp_path):
    rgba = np.zeros((2, 2, 4), dtype=np.uint8)
    assert cv2.imwrite(str(tmp_path / "a.png"), rgba)
    with pytest.raises(DataError):
        load_image(tmp_path / "a.png")


def test_missing_file():
    with pytest.raises(DataError):
        load_image("/nonexistent/never.png")


def test_bad_colorspace(tmp_path):
    write_png8(tmp_path / "x.png", np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        load_image(tmp_path / "x.png", "rec709")


# ---------------------------------------------------------------------------
# png16 output

def test_png16_quantization_codes(tmp_path):
    img = RasterImage(np.array([[[1.0], [0.25], [0.0]]]))
    save_map(img, tmp_path / "q.png", "png16")
    raw = cv2.imread(str(tmp_path / "q.png"), cv2.IMREAD_UNCHANGED)
    assert raw.dtype == np.uint16
    assert list(raw[0]) == [65535, 16384, 0]


def test_png16_range_check(tmp_path):
    img = RasterImage(np.full((2, 2, 1), 1.5))
    with pytest.raises(DataError):
        save_map(img, tmp_path / "r.png", "png16")


def test_unknown_format(tmp_path):
    img = RasterImage(np.zeros((2, 2, 1)))
    with pytest.raises(ConfigError):
        save_map(img, tmp_path / "u.exr", "exr")


def test_png16_save_load_save_identical(tmp_path):
    rng = np.random.default_rng(3)
    img = RasterImage(rng.uniform(0, 1, (9, 7, 3)))
    save_map(img, tmp_path / "a.png", "png16")
    again = load_image(tmp_path / "a.png", "linear")
    save_map(again, tmp_path / "b.png", "png16")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
def test_png16_round_trip_error_bound(x):
    code = np.floor(x * 65535.0 + 0.5)
    assert abs(code / 65535.0 - x) <= 0.5 / 65535.0 + 1e-12


# ---------------------------------------------------------------------------
# PFM

@pytest.mark.parametrize("channels", [1, 3])
def test_pfm_bit_exact_round_trip(tmp_path, channels):
    rng = np.random.default_rng(11)
    arr = rng.uniform(-40, 40, (13, 9, channels)).astype(np.float32).astype(np.float64)
    write_pfm(arr, tmp_path / "x.pfm")
    back = read_pfm(tmp_path / "x.pfm")
    np.testing.assert_array_equal(back, arr)


def test_pfm_byte_idempotent(tmp_path):
    rng = np.random.default_rng(12)
    arr = rng.standard_normal((6, 8, 3)).astype(np.float32)
    write_pfm(arr, tmp_path / "a.pfm")
    write_pfm(read_pfm(tmp_path / "a.pfm"), tmp_path / "b.pfm")
    assert (tmp_path / "a.pfm").read_bytes() == (tmp_path / "b.pfm").read_bytes()


def test_pfm_header_contents(tmp_path):
    write_pfm(np.zeros((3, 5, 1)), tmp_path / "h.pfm")
    raw = (tmp_path / "h.pfm").read_bytes()
    assert raw.startswith(b"Pf\n5 3\n-1.0\n")
    assert len(raw) == len(b"Pf\n5 3\n-1.0\n") + 3 * 5 * 4


def test_pfm_write_rejects_nonfinite(tmp_path):
    with pytest.raises(DataError):
        write_pfm(np.array([[np.nan]]), tmp_path / "n.pfm")
    with pytest.raises(DataError):
        write_pfm(np.array([[np.inf]]), tmp_path / "i.pfm")


def test_pfm_read_rejects_nan(tmp_path):
    payload = np.array([np.nan, 1.0], dtype="<f4").tobytes()
    (tmp_path / "bad.pfm").write_bytes(b"Pf\n2 1\n-1.0\n" + payload)
    with pytest.raises(DataError):
        read_pfm(tmp_path / "bad.pfm")


def test_pfm_read_rejects_truncated(tmp_path):
    (tmp_path / "t.pfm").write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 8)
    with pytest.raises(DataError):
        read_pfm(tmp_path / "t.pfm")


def test_pfm_read_not_pfm(tmp_path):
    (tmp_path / "x.pfm").write_bytes(b"hello world")
    with pytest.raises(DataError):
        read_pfm(tmp_path / "x.pfm")


def test_pfm_scale_magnitude_applied(tmp_path):
    payload = np.array([2.0], dtype="<f4").tobytes()
    (tmp_path / "s.pfm").write_bytes(b"Pf\n1 1\n-0.5\n" + payload)
    assert read_pfm(tmp_path / "s.pfm")[0, 0, 0] == 1.0


def test_pfm_row_order_bottom_up(tmp_path):
    # bottom image row is stored first in the file
    arr = np.array([[1.0], [2.0]])  # row 0 = 1, row 1 = 2
    write_pfm(arr, tmp_path / "r.pfm")
    raw = (tmp_path / "r.pfm").read_bytes()
    first = np.frombuffer(raw[-8:], dtype="<f4")
    assert list(first) == [2.0, 1.0]


def test_load_image_pfm_srgb_conflict(tmp_path):
    write_pfm(np.ones((2, 2)), tmp_path / "x.pfm")
    with pytest.raises(ConfigError):
        load_image(tmp_path / "x.pfm", "srgb")
    img = load_image(tmp_path / "x.pfm", "auto")
    assert img.data[0, 0, 0] == 1.0


def test_load_image_pfm_detected_by_magic(tmp_path):
    write_pfm(np.full((2, 2), 0.5), tmp_path / "noext.img")
    img = load_image(tmp_path / "noext.img")
    assert img.data[0, 0, 0] == 0.5


# ---------------------------------------------------------------------------
# Masks

def test_mask_round_trip(tmp_path):
    mask = np.zeros((5, 4), dtype=bool)
    mask[1:3, 2:] = True
    save_mask(mask, tmp_path / "m.png")
    np.testing.assert_array_equal(load_mask(tmp_path / "m.png"), mask)
    raw = cv2.imread(str(tmp_path / "m.png"), cv2.IMREAD_GRAYSCALE)
    assert set(np.unique(raw)) <= {0, 255}


def test_mask_threshold_128(tmp_path):
    write_png8(tmp_path / "t.png", np.array([[0, 127, 128, 255]]))
    np.testing.assert_array_equal(
        load_mask(tmp_path / "t.png"), [[False, False, True, True]]
    )


def test_full_mask():
    m = full_mask(3, 7)
    assert m.shape == (3, 7) and m.all()


# ---------------------------------------------------------------------------
# Containers

def test_raster_validation():
    with pytest.raises(DataError):
        RasterImage(np.full((2, 2, 1), -0.1))
    with pytest.raises(DataError):
        RasterImage(np.full((2, 2, 1), np.nan))
    with pytest.raises(DataError):
        RasterImage(np.zeros((2, 2, 2)))
    with pytest.raises(DataError):
        RasterImage(np.zeros(4))


def test_raster_promotes_2d_and_is_readonly():
    img = RasterImage(np.ones((3, 4)))
    assert img.data.shape == (3, 4, 1)
    assert img.channels == 1 and img.height == 3 and img.width == 4
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 2.0


def test_raster_values_above_one_allowed():
    img = RasterImage(np.full((1, 1, 1), 7.5))
    assert img.data.max() == 7.5


def test_luminance_is_channel_mean():
    data = np.zeros((1, 1, 3))
    data[0, 0] = (0.3, 0.6, 0.9)
    np.testing.assert_allclose(RasterImage(data).luminance(), [[0.6]])


def test_stack_validation():
    a = RasterImage(np.zeros((2, 3, 1)))
    b = RasterImage(np.zeros((2, 4, 1)))
    with pytest.raises(DataError):
        ImageStack((a, b), full_mask(2, 3))
    with pytest.raises(DataError):
        ImageStack((a,), full_mask(3, 3))
    with pytest.raises(DataError):
        ImageStack((), full_mask(2, 3))


def test_stack_accessors():
    imgs = tuple(RasterImage(np.full((2, 2, 3), v)) for v in (0.1, 0.2))
    stack = ImageStack(imgs, full_mask(2, 2), pose_id="p1")
    assert len(stack) == 2
    assert stack.values().shape == (2, 2, 2, 3)
    assert stack.luminances().shape == (2, 2, 2)
    np.testing.assert_allclose(stack.luminances()[1], 0.2)
    assert stack.pose_id == "p1"


def test_saturation_level_constant():
    assert SATURATION_LEVEL == 0.995

import numpy as np
import pytest
from hypothesis import given, strategies as st
from PIL import Image

from tsflow.imgio import (RegionOfInterest, antialias_sigma, as_gray, build_pyramid, crop,
                          load_gray, pyramid_shapes, resize, sample_bilinear, save_pgm)


def _write_pgm(path, raster, maxval):
    h, w = raster.shape
    dtype = ">u2" if maxval == 65535 else "u1"
    path.write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + raster.astype(dtype).tobytes())


# --------------------------------------------------------------------------
# loading

def test_8bit_extremes(tmp_path):
    p = tmp_path / "a.pgm"
    _write_pgm(p, np.array([[0, 255]]), 255)
    img = load_gray(p)
    assert img[0, 0] == 0.0
    assert img[0, 1] == 1.0


def test_16bit_normalisation(tmp_path):
    p = tmp_path / "b.pgm"
    _write_pgm(p, np.array([[32768, 0], [65535, 1]]), 65535)
    img = load_gray(p)
    assert img[0, 0] == pytest.approx(32768 / 65535, abs=1e-15)
    assert img[0, 0] == pytest.approx(0.50001, abs=1e-5)
    assert img[1, 0] == 1.0


def test_pgm_comment_in_header(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([10, 20]))
    np.testing.assert_array_equal(load_gray(p), [[10 / 255, 20 / 255]])


def test_png_gray_and_rgb(tmp_path):
    g = np.array([[0, 128], [255, 7]], dtype=np.uint8)
    Image.fromarray(g, mode="L").save(tmp_path / "g.png")
    np.testing.assert_allclose(load_gray(tmp_path / "g.png"), g / 255.0)

    rgb = np.zeros((1, 3, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[0, 1] = (0, 255, 0)
    rgb[0, 2] = (0, 0, 255)
    Image.fromarray(rgb, mode="RGB").save(tmp_path / "c.png")
    np.testing.assert_allclose(load_gray(tmp_path / "c.png")[0], [0.299, 0.587, 0.114])


def test_png_16bit(tmp_path):
    raw = np.array([[0, 65535, 32768]], dtype=np.uint16)
    Image.fromarray(raw).save(tmp_path / "d.png")
    np.testing.assert_allclose(load_gray(tmp_path / "d.png"), raw / 65535.0)


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_gray(tmp_path / "missing.pgm")
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"not an image")
    with pytest.raises(ValueError):
        load_gray(junk)
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n1 1\n4095\n\x00\x01")
    with pytest.raises(ValueError, match="maximum value"):
        load_gray(bad)


@pytest.mark.parametrize("bits", [8, 16])
def test_pgm_round_trip(tmp_path, rng, bits):
    img = np.round(rng.random((7, 5)) * (2 ** bits - 1)) / (2 ** bits - 1)
    save_pgm(tmp_path / "x.pgm", img, bits=bits)
    np.testing.assert_array_equal(load_gray(tmp_path / "x.pgm"), img)


def test_as_gray_rejects_out_of_range():
    with pytest.raises(ValueError):
        as_gray([[1.5]])
    with pytest.raises(ValueError):
        as_gray([[np.nan]])
    with pytest.raises(ValueError):
        as_gray(np.zeros((0, 3)))


# --------------------------------------------------------------------------
# cropping

def test_crop_index_oracle():
    img = np.arange(100.0).reshape(10, 10)
    out = crop(img, RegionOfInterest(5, 5, 2, 2))
    assert out.shape == (5, 5)
    np.testing.assert_array_equal(out, img[3:8, 3:8])


def test_crop_whole_image_is_identity(rng):
    img = rng.random((9, 13))
    np.testing.assert_array_equal(crop(img, RegionOfInterest.whole(img.shape)), img)


def test_crop_analysis_grid_size():
    # the 801 x 1861 analysis grid out of a 2448 x 2050 frame
    roi = RegionOfInterest(center_y=780, center_z=990, half_width=400, half_height=930)
    assert roi.fits((2050, 2448))
    out = crop(np.zeros((2050, 2448)), roi)
    assert out.shape == (1861, 801)
    assert out.size == 1_490_661
    assert abs(out.size - 1.5e6) / 1.5e6 < 0.01


def test_crop_out_of_bounds():
    with pytest.raises(ValueError):
        crop(np.zeros((10, 10)), RegionOfInterest(1, 5, 2, 2))


@given(st.integers(0, 4), st.integers(0, 4), st.integers(0, 3), st.integers(0, 3),
       st.integers(0, 2), st.integers(0, 2))
def test_nested_crop_equals_composed(oy, oz, hw, hh, iy, iz):
    img = np.arange(30 * 40, dtype=float).reshape(30, 40)
    outer = RegionOfInterest(10 + oy, 10 + oz, 6 + hw, 6 + hh)
    inner = RegionOfInterest(outer.half_width + iy, outer.half_height + iz, 2, 3)
    a = crop(crop(img, outer), inner)
    b = crop(img, outer.compose(inner))
    np.testing.assert_array_equal(a, b)


# --------------------------------------------------------------------------
# sampling

def test_sample_on_lattice_is_exact(rng):
    img = rng.random((6, 7))
    zz, yy = np.mgrid[0:6, 0:7]
    np.testing.assert_array_equal(sample_bilinear(img, yy, zz), img)


def test_sample_midpoint():
    assert sample_bilinear(np.array([[0.0, 1.0]]), 0.5, 0.0) == 0.5
    assert sample_bilinear(np.array([[0.0], [1.0]]), 0.0, 0.5) == 0.5


def test_sample_clamps_to_border():
    img = np.array([[0.2, 0.4], [0.6, 0.8]])
    assert sample_bilinear(img, -3.0, -1.0) == 0.2
    assert sample_bilinear(img, 5.0, 9.0) == 0.8


def test_sample_rejects_non_finite():
    with pytest.raises(ValueError):
        sample_bilinear(np.zeros((3, 3)), np.nan, 0.0)


@given(st.floats(0, 1), st.floats(0, 4), st.floats(0, 5))
def test_sample_constant_image(c, y, z):
    assert sample_bilinear(np.full((6, 5), c), y, z) == pytest.approx(c, abs=1e-15)


@given(st.floats(0, 5), st.integers(0, 4))
def test_sample_linear_along_axes(y, z):
    a, b = 0.3, -0.07
    img = a + b * np.arange(6.0)[None, :].repeat(5, axis=0)
    assert sample_bilinear(img, y, float(z)) == pytest.approx(a + b * y, abs=1e-12)


# --------------------------------------------------------------------------
# pyramids

def test_pyramid_levels_800():
    shapes = pyramid_shapes((600, 800), 0.75, 20)
    assert len(shapes) == 13
    assert shapes[0][1] == 800
    assert shapes[-1][1] == 25


def test_pyramid_single_level():
    assert len(build_pyramid(np.zeros((20, 20)), 0.5, 20)) == 1


def test_pyramid_two_levels():
    p = build_pyramid(np.zeros((40, 40)), 0.5, 20)
    assert [lv.shape[1] for lv in p.levels] == [40, 20]


def test_pyramid_argument_checks():
    with pytest.raises(ValueError):
        pyramid_shapes((10, 10), 1.0, 4)
    with pytest.raises(ValueError):
        pyramid_shapes((10, 10), 0.5, 3)


def test_antialias_sigma():
    assert antialias_sigma(0.5) == pytest.approx(0.8 * np.sqrt(3.0))


@given(st.integers(16, 300), st.integers(16, 300), st.sampled_from([0.5, 0.6, 0.75, 0.9]),
       st.integers(4, 40))
def test_pyramid_shape_properties(h, w, ratio, cw):
    shapes = pyramid_shapes((h, w), ratio, cw)
    widths = [s[1] for s in shapes]
    heights = [s[0] for s in shapes]
    assert all(b <= a for a, b in zip(widths, widths[1:]))
    assert all(b <= a for a, b in zip(heights, heights[1:]))
    if len(shapes) > 1:
        assert widths[-1] >= cw
    # one more level would fall below the coarsest width (or stop shrinking)
    nxt = round(w * ratio ** len(shapes))
    assert nxt < cw or nxt >= widths[-1]


@given(st.floats(0, 1), st.sampled_from([0.5, 0.75]))
def test_pyramid_preserves_constant_energy(c, ratio):
    p = build_pyramid(np.full((64, 80), c), ratio, 8)
    for lv in p.levels:
        assert np.mean(lv ** 2) == pytest.approx(c * c, abs=1e-12)


def test_resize_identity(rng):
    img = rng.random((8, 11))
    np.testing.assert_allclose(resize(img, img.shape), img, atol=1e-15)

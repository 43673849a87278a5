import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import rand_image
from wbench.imagecore import (
    GRAY, RGB, YUV, ImageBuf, ImageError, from_yuv, image_io, load_image, luma, mse_yuv,
    psnr, quantize8, resize_array, resize_bilinear, rgb_to_yuv_array, save_image, ssim,
    to_lattice, to_yuv, yuv_to_rgb_array,
)

unit_floats = st.floats(0.0, 1.0, allow_nan=False)


def test_imagebuf_validation():
    with pytest.raises(ImageError):
        ImageBuf(np.zeros((4, 4)), RGB)
    with pytest.raises(ImageError):
        ImageBuf(np.zeros((4, 4, 1)), RGB)
    with pytest.raises(ImageError):
        ImageBuf(np.zeros((4, 4, 3)), "HSV")
    with pytest.raises(ImageError):
        ImageBuf(np.full((4, 4, 3), np.nan), RGB)
    img = ImageBuf(np.zeros((4, 5, 3)))
    assert (img.height, img.width, img.channels) == (4, 5, 3)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0


def test_quantize_round_half_up():
    v = np.array([0.0, 0.5 / 255, 1.5 / 255, 1.0, 1.2, -0.1])
    assert quantize8(v).tolist() == [0, 1, 2, 255, 255, 0]


@given(arrays(np.float64, (6, 7, 3), elements=unit_floats))
def test_png_roundtrip_exact_on_lattice(tmp_path_factory, data):
    img = to_lattice(ImageBuf(data))
    path = tmp_path_factory.mktemp("png") / "a.png"
    save_image(path, img)
    back = load_image(path)
    assert np.array_equal(back.data, img.data)


def test_ppm_roundtrip_and_errors(tmp_path):
    img = rand_image(1, 9, 11)
    p = tmp_path / "x.ppm"
    image_io(p, "save", img)
    assert np.array_equal(image_io(p, "load").data, img.data)

    bad = tmp_path / "deep.ppm"
    bad.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
    with pytest.raises(ImageError, match="bit depth"):
        load_image(bad)
    trunc = tmp_path / "trunc.ppm"
    trunc.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(ImageError, match="trunc.ppm"):
        load_image(trunc)
    with pytest.raises(ImageError, match="missing.png"):
        load_image(tmp_path / "missing.png")
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"hello world")
    with pytest.raises(ImageError):
        load_image(junk)


def test_png_16bit_rejected(tmp_path):
    from PIL import Image
    p = tmp_path / "d.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(p)
    with pytest.raises(ImageError, match="bit depth"):
        load_image(p)


def test_gray_png_loads_as_rgb(tmp_path):
    g = ImageBuf.gray(np.linspace(0, 1, 20).reshape(4, 5))
    p = tmp_path / "g.png"
    save_image(p, g)
    back = load_image(p)
    assert back.colorspace == RGB and back.channels == 3
    assert np.allclose(back.data[..., 0], back.data[..., 2])


@given(arrays(np.float64, (5, 4, 3), elements=unit_floats))
def test_yuv_roundtrip(data):
    back = yuv_to_rgb_array(rgb_to_yuv_array(data))
    assert np.max(np.abs(back - data)) <= 1e-12
    img = ImageBuf(data)
    assert np.allclose(from_yuv(to_yuv(img)).data, data, atol=1e-12)


def test_yuv_reference_values():
    # pure white has luma 1 and no chroma; pure red has the textbook U/V
    yuv = rgb_to_yuv_array(np.array([[[1.0, 1.0, 1.0], [1.0, 0.0, 0.0]]]))
    assert np.allclose(yuv[0, 0], [1, 0, 0], atol=1e-12)
    assert np.allclose(yuv[0, 1], [0.299, 0.492 * -0.299, 0.877 * 0.701], atol=1e-12)
    assert to_yuv(rand_image(0)).colorspace == YUV
    assert luma(ImageBuf(np.ones((3, 3, 3)))).shape == (3, 3)


@given(st.integers(1, 20), st.integers(1, 20), st.floats(0, 1))
def test_resize_constant_preserved(w, h, c):
    img = ImageBuf(np.full((7, 9, 3), c))
    out = resize_bilinear(img, w, h)
    assert out.shape == (h, w, 3)
    assert np.allclose(out.data, c, atol=1e-12)


def test_resize_identity_and_errors():
    img = rand_image(3, 8, 10)
    assert np.array_equal(resize_bilinear(img, 10, 8).data, img.data)
    with pytest.raises(ImageError):
        resize_bilinear(img, 0, 4)


def test_resize_halfpixel_centres():
    # 2 -> 4 upsample of [0, 1]: sample centres at 0.25, 0.75 of input pixels
    x = np.array([[0.0, 1.0]])[..., None]
    out = resize_array(x, 4, 1)[0, :, 0]
    assert np.allclose(out, [0.0, 0.25, 0.75, 1.0])
    down = resize_array(np.arange(4.0)[None, :, None], 2, 1)[0, :, 0]
    assert np.allclose(down, [0.5, 2.5])


def test_psnr_values():
    a = ImageBuf(np.zeros((4, 4, 3)))
    b = ImageBuf(np.full((4, 4, 3), 0.1))
    assert psnr(a, a) == math.inf
    assert psnr(a, b) == pytest.approx(20.0)
    with pytest.raises(ImageError):
        psnr(a, ImageBuf(np.zeros((4, 5, 3))))


def test_ssim_properties():
    a = rand_image(5, 40, 40)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    b = a.with_data(np.clip(a.data + np.random.default_rng(1).normal(0, 0.1, a.shape), 0, 1))
    s = ssim(a, b)
    assert -1.0 <= s < 0.99
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    with pytest.raises(ImageError):
        ssim(rand_image(0, 8, 8), rand_image(1, 8, 8))


def test_ssim_matches_direct_window():
    # brute-force oracle: explicit weighted statistics at one window position
    a, b = rand_image(7, 11, 11), rand_image(8, 11, 11)
    x, y = luma(a), luma(b)
    t = np.arange(11) - 5
    g = np.exp(-(t ** 2) / (2 * 1.5 ** 2))
    w = np.outer(g, g) / np.outer(g, g).sum()
    mx, my = (w * x).sum(), (w * y).sum()
    sxx = (w * x * x).sum() - mx ** 2
    syy = (w * y * y).sum() - my ** 2
    sxy = (w * x * y).sum() - mx * my
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    ref = (2 * mx * my + c1) * (2 * sxy + c2) / ((mx ** 2 + my ** 2 + c1) * (sxx + syy + c2))
    assert ssim(a, b) == pytest.approx(ref, abs=1e-12)


def test_mse_yuv():
    a = rand_image(2)
    assert mse_yuv(a, a) == 0.0
    assert mse_yuv(a, rand_image(3)) > 0
    assert GRAY == "GRAY"

"""Image buffers, color transforms, resampling, quality metrics and raster I/O."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

RGB, YUV, GRAY = "RGB", "YUV", "GRAY"
_COLORSPACES = {RGB: 3, YUV: 3, GRAY: 1}

# BT.601 full range, zero-centred chroma
_KR, _KG, _KB = 0.299, 0.587, 0.114
_U_SCALE, _V_SCALE = 0.492, 0.877


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class ImageBuf:
    """Float raster, shape ``(height, width, channels)``.

    Samples are nominally in [0, 1]; Y is in [0, 1] and chroma is centred on
    zero when ``colorspace`` is YUV.
    """

    data: np.ndarray
    colorspace: str = RGB

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ImageError(f"expected (H, W, C) array, got shape {data.shape}")
        if self.colorspace not in _COLORSPACES:
            raise ImageError(f"unknown colorspace {self.colorspace!r}")
        if data.shape[2] != _COLORSPACES[self.colorspace]:
            raise ImageError(
                f"{self.colorspace} needs {_COLORSPACES[self.colorspace]} channels, "
                f"got {data.shape[2]}"
            )
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ImageError("empty image")
        if not np.all(np.isfinite(data)):
            raise ImageError("non-finite samples")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> ImageBuf:
        return ImageBuf(data, self.colorspace)

    def clamp(self, lo: float = 0.0, hi: float = 1.0) -> ImageBuf:
        return self.with_data(np.clip(self.data, lo, hi))

    @classmethod
    def gray(cls, data) -> ImageBuf:
        return cls(np.asarray(data, dtype=np.float64), GRAY)


# ---------------------------------------------------------------------------
# raster I/O

def quantize8(data: np.ndarray) -> np.ndarray:
    """round-half-up to the 8-bit lattice, clamped to [0, 255]."""
    return np.clip(np.floor(np.asarray(data) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def to_lattice(img: ImageBuf) -> ImageBuf:
    """Snap samples to the values an 8-bit save/load cycle would produce."""
    return img.with_data(quantize8(img.data) / 255.0)


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def _load_ppm(path: str) -> ImageBuf:
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0
    fields = []
    for _ in range(4):
        tok, pos = _read_token(buf, pos)
        fields.append(tok)
    if fields[0] != b"P6":
        raise ImageError(f"{path}: malformed header: not a binary PPM (P6)")
    try:
        width, height, maxval = (int(t) for t in fields[1:])
    except ValueError:
        raise ImageError(f"{path}: malformed header: bad dimensions") from None
    if width < 1 or height < 1:
        raise ImageError(f"{path}: malformed header: empty image")
    if maxval != 255:
        raise ImageError(f"{path}: unsupported bit depth (maxval {maxval})")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    need = width * height * 3
    raster = buf[pos:pos + need]
    if len(raster) != need:
        raise ImageError(f"{path}: truncated raster ({len(raster)} of {need} bytes)")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuf(arr / 255.0, RGB)


def _load_png(path: str) -> ImageBuf:
    try:
        with Image.open(path) as im:
            im.load()
            if im.format != "PNG":
                raise ImageError(f"{path}: unsupported format {im.format}")
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F", "RGBA;16", "RGB;16"):
                raise ImageError(f"{path}: unsupported bit depth (mode {mode})")
            if mode in ("1", "L", "P", "LA"):
                im = im.convert("L").convert("RGB")
            elif mode in ("RGB", "RGBA"):
                im = im.convert("RGB")
            else:
                raise ImageError(f"{path}: unsupported bit depth (mode {mode})")
            arr = np.asarray(im, dtype=np.uint8)
    except ImageError:
        raise
    except (OSError, SyntaxError) as exc:
        raise ImageError(f"{path}: unreadable file ({exc})") from exc
    return ImageBuf(arr / 255.0, RGB)


def load_image(path) -> ImageBuf:
    """Load an 8-bit PNG or binary PPM as an RGB buffer with samples v/255."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ImageError(f"{path}: unreadable file (does not exist)")
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic.startswith(b"\x89PNG"):
        img = _load_png(path)
    elif magic.startswith(b"P"):
        img = _load_ppm(path)
    else:
        raise ImageError(f"{path}: unreadable file (not PNG or PPM)")
    return img


def save_image(path, img: ImageBuf) -> None:
    """Save as PNG (RGB or gray) or, for a ``.ppm`` suffix, binary PPM."""
    path = os.fspath(path)
    if img.colorspace == YUV:
        img = from_yuv(img)
    q = quantize8(img.data)
    if path.lower().endswith(".ppm"):
        if img.colorspace == GRAY:
            q = np.repeat(q, 3, axis=2)
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(q.tobytes())
        return
    if img.colorspace == GRAY:
        im = Image.fromarray(q[:, :, 0], mode="L")
    else:
        im = Image.fromarray(q, mode="RGB")
    # fixed compression settings keep output bytes reproducible
    im.save(path, format="PNG", optimize=False, compress_level=6)


def image_io(path, mode: str, buf: ImageBuf | None = None):
    if mode == "load":
        return load_image(path)
    if mode == "save":
        if buf is None:
            raise ImageError("save needs an image")
        save_image(path, buf)
        return None
    raise ImageError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# colour

def rgb_to_yuv_array(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = _KR * r + _KG * g + _KB * b
    return np.stack([y, _U_SCALE * (b - y), _V_SCALE * (r - y)], axis=-1)


def yuv_to_rgb_array(yuv: np.ndarray) -> np.ndarray:
    y, u, v = yuv[..., 0], yuv[..., 1], yuv[..., 2]
    b = y + u / _U_SCALE
    r = y + v / _V_SCALE
    g = (y - _KR * r - _KB * b) / _KG
    return np.stack([r, g, b], axis=-1)


def to_yuv(img: ImageBuf) -> ImageBuf:
    if img.colorspace != RGB:
        raise ImageError(f"to_yuv needs RGB input, got {img.colorspace}")
    return ImageBuf(rgb_to_yuv_array(img.data), YUV)


def from_yuv(img: ImageBuf) -> ImageBuf:
    if img.colorspace != YUV:
        raise ImageError(f"from_yuv needs YUV input, got {img.colorspace}")
    return ImageBuf(yuv_to_rgb_array(img.data), RGB)


def luma(img: ImageBuf) -> np.ndarray:
    """2-D luminance plane of an RGB, YUV or gray buffer."""
    if img.colorspace == RGB:
        d = img.data
        return _KR * d[..., 0] + _KG * d[..., 1] + _KB * d[..., 2]
    return img.data[..., 0]


# ---------------------------------------------------------------------------
# resampling

def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_array(data: np.ndarray, width: int, height: int) -> np.ndarray:
    """Separable bilinear resize of an (H, W, ...) array."""
    h, w = data.shape[:2]
    out = data
    if height != h:
        lo, hi, f = _axis_weights(h, height)
        f = f.reshape((-1,) + (1,) * (data.ndim - 1))
        out = out[lo] * (1.0 - f) + out[hi] * f
    if width != w:
        lo, hi, f = _axis_weights(w, width)
        f = f.reshape((1, -1) + (1,) * (data.ndim - 2))
        out = out[:, lo] * (1.0 - f) + out[:, hi] * f
    return np.array(out, dtype=np.float64, copy=(out is data))


def resize_bilinear(img: ImageBuf, w: int, h: int) -> ImageBuf:
    if w < 1 or h < 1:
        raise ImageError(f"zero target dimension ({w}x{h})")
    return img.with_data(resize_array(img.data, int(w), int(h)))


# ---------------------------------------------------------------------------
# quality metrics

def _check_same(a: ImageBuf, b: ImageBuf) -> None:
    if a.shape != b.shape:
        raise ImageError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: ImageBuf, b: ImageBuf) -> float:
    """PSNR in dB for unit dynamic range; ``inf`` when the images are equal."""
    _check_same(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _gauss_window() -> np.ndarray:
    x = np.arange(SSIM_WIN) - SSIM_WIN // 2
    g = np.exp(-(x ** 2) / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation (kernel is symmetric)
    n = len(g)
    rows = sum(g[i] * x[i:x.shape[0] - n + 1 + i] for i in range(n))
    return sum(g[j] * rows[:, j:rows.shape[1] - n + 1 + j] for j in range(n))


def ssim(a: ImageBuf, b: ImageBuf, data_range: float = 1.0) -> float:
    """Mean SSIM on the luminance plane (Gaussian 11x11 window, sigma 1.5)."""
    if a.shape[:2] != b.shape[:2]:
        raise ImageError(f"shape mismatch: {a.shape} vs {b.shape}")
    x, y = luma(a), luma(b)
    if min(x.shape) < SSIM_WIN:
        raise ImageError(f"image smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    g = _gauss_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def mse_yuv(a: ImageBuf, b: ImageBuf) -> float:
    """Unweighted MSE over Y, U and V after converting both RGB inputs."""
    _check_same(a, b)
    d = rgb_to_yuv_array(a.data) - rgb_to_yuv_array(b.data)
    return float(np.mean(d * d))

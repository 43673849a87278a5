"""Surrogate distortion suite with five-step severity ladders.

Every attack maps an RGB buffer in [0, 1] to an RGB buffer in [0, 1]. The
noise kinds draw from a Philox generator keyed by ``AttackSpec.seed`` so a
given spec always produces the same output; motion blur also takes its angle
from the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .imagecore import RGB, ImageBuf, resize_array, rgb_to_yuv_array, yuv_to_rgb_array
from .spectral import dct2_block, from_blocks, to_blocks

LADDER_VERSION = "1"

NONE = "none"
SATURATION = "saturation"
CONTRAST = "contrast"
BRIGHTNESS = "brightness"
JPEG = "jpeg"
GAUSS_NOISE = "gauss_noise"
SHOT_NOISE = "shot_noise"
IMPULSE_NOISE = "impulse_noise"
SPECKLE_NOISE = "speckle_noise"
PIXELATE = "pixelate"
DEFOCUS_BLUR = "defocus_blur"
ZOOM_BLUR = "zoom_blur"
GAUSS_BLUR = "gauss_blur"
MOTION_BLUR = "motion_blur"

KINDS = (
    SATURATION, CONTRAST, BRIGHTNESS, JPEG,
    GAUSS_NOISE, SHOT_NOISE, IMPULSE_NOISE, SPECKLE_NOISE,
    PIXELATE, DEFOCUS_BLUR, ZOOM_BLUR, GAUSS_BLUR, MOTION_BLUR,
)
BLUR_KINDS = (PIXELATE, DEFOCUS_BLUR, ZOOM_BLUR, GAUSS_BLUR, MOTION_BLUR)
NOISE_KINDS = (GAUSS_NOISE, SHOT_NOISE, IMPULSE_NOISE, SPECKLE_NOISE)

# severity 1 (mild) .. 5 (severe). Changing any entry invalidates recorded
# benchmarks: bump LADDER_VERSION.
LADDER: dict[str, tuple[dict, ...]] = {
    SATURATION: tuple({"factor": f} for f in (0.9, 0.8, 0.7, 0.6, 0.5)),
    CONTRAST: tuple({"factor": f} for f in (0.9, 0.8, 0.7, 0.6, 0.5)),
    BRIGHTNESS: tuple({"factor": f} for f in (1.1, 1.2, 1.3, 1.4, 1.5)),
    JPEG: tuple({"quality": q} for q in (80, 60, 40, 25, 15)),
    GAUSS_NOISE: tuple({"sigma": s} for s in (0.02, 0.05, 0.08, 0.12, 0.18)),
    SHOT_NOISE: tuple({"photons": p} for p in (500, 250, 100, 50, 25)),
    IMPULSE_NOISE: tuple({"fraction": f} for f in (0.01, 0.03, 0.06, 0.10, 0.15)),
    SPECKLE_NOISE: tuple({"sigma": s} for s in (0.05, 0.10, 0.15, 0.20, 0.30)),
    PIXELATE: tuple({"block": b} for b in (2, 4, 8, 12, 16)),
    DEFOCUS_BLUR: tuple({"radius": r} for r in (1, 2, 3, 5, 7)),
    ZOOM_BLUR: tuple({"max_scale": s, "steps": 8} for s in (1.02, 1.06, 1.10, 1.16, 1.22)),
    GAUSS_BLUR: tuple({"kernel": k, "sigma": s}
                      for k, s in ((3, 0.5), (5, 1.0), (9, 2.0), (13, 3.0), (17, 4.0))),
    MOTION_BLUR: tuple({"length": n} for n in (3, 5, 9, 13, 17)),
}


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    severity: int = 1
    seed: int = 0
    params: dict | None = field(default=None, compare=True, hash=False)

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind == NONE:
            return
        if kind not in KINDS:
            raise AttackError(f"unknown attack kind {self.kind!r}")
        if self.params is None and not 1 <= int(self.severity) <= 5:
            raise AttackError(f"severity {self.severity} outside 1..5")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise AttackError("seed must fit in 64 bits")

    @property
    def label(self) -> str:
        if self.kind == NONE:
            return NONE
        if self.params is not None:
            extra = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
            return f"{self.kind}[{extra}]"
        return f"{self.kind}@{self.severity}"

    def resolved_params(self) -> dict:
        if self.kind == NONE:
            return {}
        if self.params is not None:
            return dict(self.params)
        return severity_params(self.kind, self.severity)


IDENTITY = AttackSpec(NONE, 0)


def severity_params(kind: str, severity: int) -> dict:
    kind = str(kind).lower()
    if kind not in LADDER:
        raise AttackError(f"unknown attack kind {kind!r}")
    if not 1 <= int(severity) <= 5:
        raise AttackError(f"severity {severity} outside 1..5")
    return dict(LADDER[kind][int(severity) - 1])


def ladder_table() -> dict:
    return {"version": LADDER_VERSION,
            "ladder": {k: [dict(p) for p in LADDER[k]] for k in KINDS}}


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


# ---------------------------------------------------------------------------
# photometric

def _saturation(x, factor):
    yuv = rgb_to_yuv_array(x)
    yuv[..., 1:] *= factor
    return yuv_to_rgb_array(yuv)


def _contrast(x, factor):
    mean = x.mean(axis=(0, 1), keepdims=True)
    return (x - mean) * factor + mean


def _brightness(x, factor):
    return x * factor


# ---------------------------------------------------------------------------
# JPEG

_LUMA_Q = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

_CHROMA_Q = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


def quant_tables(quality: int) -> tuple[np.ndarray, np.ndarray]:
    """Annex K tables scaled with the libjpeg quality formula."""
    if not 1 <= int(quality) <= 100:
        raise AttackError(f"JPEG quality {quality} outside 1..100")
    q = int(quality)
    scale = 5000 // q if q < 50 else 200 - 2 * q

    def scaled(t):
        return np.clip(np.floor((t * scale + 50) / 100), 1, 255)

    return scaled(_LUMA_Q), scaled(_CHROMA_Q)


def _pad_to(x, mult):
    h, w = x.shape
    return np.pad(x, ((0, (-h) % mult), (0, (-w) % mult)), mode="edge")


def _code_plane(plane, table):
    blocks = to_blocks(plane - 128.0)
    coef = dct2_block(blocks)
    coef = np.round(coef / table) * table
    return from_blocks(dct2_block(coef, "inverse")) + 128.0


def jpeg_roundtrip(img: ImageBuf, quality: int) -> ImageBuf:
    """Baseline JPEG distortion without the (lossless) entropy coding stage."""
    luma_t, chroma_t = quant_tables(quality)
    x = img.data * 255.0
    h, w = x.shape[:2]
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b

    yp = _pad_to(y, 16)
    hp, wp = yp.shape
    y_rec = _code_plane(yp, luma_t)[:h, :w]

    chans = []
    for c in (cb, cr):
        cp = _pad_to(c, 16)
        sub = cp.reshape(hp // 2, 2, wp // 2, 2).mean(axis=(1, 3))
        sub = _pad_to(sub, 8)
        rec = _code_plane(sub, chroma_t)[: hp // 2, : wp // 2]
        # bilinear with half-pixel centres, like libjpeg's fancy upsampling
        chans.append(resize_array(rec, wp, hp)[:h, :w])
    cb_rec, cr_rec = chans

    r2 = y_rec + 1.402 * (cr_rec - 128.0)
    g2 = y_rec - 0.344136 * (cb_rec - 128.0) - 0.714136 * (cr_rec - 128.0)
    b2 = y_rec + 1.772 * (cb_rec - 128.0)
    out = np.stack([r2, g2, b2], axis=-1)
    # decoders emit 8-bit samples
    out = np.clip(np.floor(out + 0.5), 0, 255) / 255.0
    return img.with_data(out)


# ---------------------------------------------------------------------------
# noise

def _gauss_noise(x, sigma, rng):
    return x + rng.normal(0.0, sigma, size=x.shape)


def _shot_noise(x, photons, rng):
    return rng.poisson(np.clip(x, 0, 1) * photons) / photons


def _impulse_noise(x, fraction, rng):
    out = x.copy()
    h, w, _ = x.shape
    hit = rng.random((h, w)) < fraction
    salt = rng.random((h, w)) < 0.5
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def _speckle_noise(x, sigma, rng):
    return x + x * rng.normal(0.0, sigma, size=x.shape)


# ---------------------------------------------------------------------------
# blur

def gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return k / k.sum()


def disk_kernel(radius: int) -> np.ndarray:
    t = np.arange(-radius, radius + 1)
    k = ((t[:, None] ** 2 + t[None, :] ** 2) <= radius * radius).astype(np.float64)
    return k / k.sum()


def motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Anti-aliased line of ``length`` pixels through the kernel centre."""
    size = length if length % 2 else length + 1
    k = np.zeros((size, size))
    c = (size - 1) / 2.0
    theta = math.radians(angle_deg)
    dx, dy = math.cos(theta), -math.sin(theta)
    for t in np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, 4 * length):
        px, py = c + t * dx, c + t * dy
        x0, y0 = int(math.floor(px)), int(math.floor(py))
        fx, fy = px - x0, py - y0
        for yy, xx, wgt in ((y0, x0, (1 - fx) * (1 - fy)), (y0, x0 + 1, fx * (1 - fy)),
                            (y0 + 1, x0, (1 - fx) * fy), (y0 + 1, x0 + 1, fx * fy)):
            if 0 <= yy < size and 0 <= xx < size:
                k[yy, xx] += wgt
    return k / k.sum()


def convolve_reflect(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D convolution of every channel with symmetric (reflect) padding."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    out = np.empty_like(x)
    for c in range(x.shape[2]):
        padded = np.pad(x[..., c], ((ph, kh - 1 - ph), (pw, kw - 1 - pw)), mode="symmetric")
        out[..., c] = signal.fftconvolve(padded, kernel, mode="valid")
    return out


def _gauss_blur(x, kernel, sigma):
    k = gaussian_kernel1d(kernel, sigma)
    out = ndimage.correlate1d(x, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def _defocus(x, radius):
    return convolve_reflect(x, disk_kernel(radius))


def _motion(x, length, angle):
    return convolve_reflect(x, motion_kernel(length, angle))


def _zoom(x, max_scale, steps):
    h, w = x.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    acc = np.zeros_like(x)
    for s in np.linspace(1.0, max_scale, int(steps)):
        if s == 1.0:
            acc += x
            continue
        coords = [cy + (yy - cy) / s, cx + (xx - cx) / s]
        for c in range(x.shape[2]):
            acc[..., c] += ndimage.map_coordinates(x[..., c], coords, order=1, mode="reflect")
    return acc / int(steps)


def _pixelate(x, block):
    block = int(block)
    if block <= 1:
        return x.copy()
    h, w = x.shape[:2]
    ys = np.arange(0, h, block)
    xs = np.arange(0, w, block)
    sums = np.add.reduceat(np.add.reduceat(x, ys, axis=0), xs, axis=1)
    ny = np.diff(np.append(ys, h))
    nx = np.diff(np.append(xs, w))
    means = sums / (ny[:, None, None] * nx[None, :, None])
    return np.repeat(np.repeat(means, ny, axis=0), nx, axis=1)


# ---------------------------------------------------------------------------

def apply_params(img: ImageBuf, kind: str, params: dict, seed: int = 0) -> ImageBuf:
    """Apply ``kind`` with an explicit parameter record (no ladder lookup)."""
    if img.colorspace != RGB:
        raise AttackError(f"attacks take RGB input, got {img.colorspace}")
    x = img.data
    kind = kind.lower()
    if kind == NONE:
        return img
    if kind == SATURATION:
        out = _saturation(x, params["factor"])
    elif kind == CONTRAST:
        out = _contrast(x, params["factor"])
    elif kind == BRIGHTNESS:
        out = _brightness(x, params["factor"])
    elif kind == JPEG:
        return jpeg_roundtrip(img, params["quality"])
    elif kind == GAUSS_NOISE:
        out = _gauss_noise(x, params["sigma"], _rng(seed))
    elif kind == SHOT_NOISE:
        out = _shot_noise(x, params["photons"], _rng(seed))
    elif kind == IMPULSE_NOISE:
        out = _impulse_noise(x, params["fraction"], _rng(seed))
    elif kind == SPECKLE_NOISE:
        out = _speckle_noise(x, params["sigma"], _rng(seed))
    elif kind == PIXELATE:
        out = _pixelate(x, params["block"])
    elif kind == DEFOCUS_BLUR:
        out = _defocus(x, params["radius"])
    elif kind == ZOOM_BLUR:
        out = _zoom(x, params["max_scale"], params.get("steps", 8))
    elif kind == GAUSS_BLUR:
        out = _gauss_blur(x, params["kernel"], params["sigma"])
    elif kind == MOTION_BLUR:
        angle = params.get("angle")
        if angle is None:
            angle = float(_rng(seed).uniform(0.0, 180.0))
        out = _motion(x, params["length"], angle)
    else:
        raise AttackError(f"unknown attack kind {kind!r}")
    return img.with_data(np.clip(out, 0.0, 1.0))


def apply_attack(img: ImageBuf, spec: AttackSpec) -> ImageBuf:
    return apply_params(img, spec.kind, spec.resolved_params(), spec.seed)


def parse_attack(text: str, seed: int = 0) -> AttackSpec:
    """Parse ``kind@severity`` (or ``none``) as used on the command line."""
    text = text.strip().lower()
    if text == NONE:
        return IDENTITY
    kind, _, sev = text.partition("@")
    try:
        severity = int(sev) if sev else 1
    except ValueError:
        raise AttackError(f"bad severity in {text!r}") from None
    return AttackSpec(kind, severity, seed)

"""Blind multi-bit watermarking: low-frequency QIM plus two classical baselines.

``LFQIM`` quantises DFT magnitudes of the luminance plane inside a
low-frequency annulus. Each bit owns ``m`` key-selected bins; the magnitude of
every owned bin is snapped to one of two interleaved lattices (offset 0 for a
zero bit, ``delta / 2`` for a one bit) and the phase is kept. ``delta`` is
expressed per pixel, i.e. in units of ``|F| / (W * H)``, so the same key
works at any resolution.

``DWT_DCT`` and ``DWT_DCT_SVD`` are the usual wavelet/DCT and wavelet/SVD
schemes on a level-1 Haar decomposition of luminance.

All methods embed at the key's native resolution; ``scaled_embed`` and
``scaled_extract`` wrap them for arbitrary sizes via residual upsampling.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .imagecore import (
    RGB, ImageBuf, resize_array, rgb_to_yuv_array,
)
from .spectral import (
    dct2_block, fft2_array, from_blocks, haar_dwt2, haar_idwt2, radial_grid,
    svd_small, to_blocks,
)

LFQIM = "LFQIM"
DWT_DCT = "DWT_DCT"
DWT_DCT_SVD = "DWT_DCT_SVD"
METHODS = (LFQIM, DWT_DCT, DWT_DCT_SVD)

CAPACITY = {LFQIM: 100, DWT_DCT: 30, DWT_DCT_SVD: 30}

# DCT coefficient pair compared by DWT_DCT
_PAIR_A = (2, 1)
_PAIR_B = (1, 2)


class WatermarkError(ValueError):
    pass


# ---------------------------------------------------------------------------
# messages and keys

@dataclass(frozen=True)
class BitMessage:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits).astype(bool).ravel()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other) -> bool:
        return isinstance(other, BitMessage) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    @property
    def k(self) -> int:
        return self.bits.size

    def complement(self) -> BitMessage:
        return BitMessage(~self.bits)

    def to_hex(self) -> str:
        """Lowercase hex, ceil(k/4) nibbles, first bit most significant."""
        value = 0
        for b in self.bits:
            value = (value << 1) | int(b)
        return format(value, f"0{(self.k + 3) // 4}x")

    @classmethod
    def from_hex(cls, text: str, k: int) -> BitMessage:
        text = text.strip().lower()
        if text.startswith("0x"):
            text = text[2:]
        if len(text) != (k + 3) // 4:
            raise WatermarkError(f"expected {(k + 3) // 4} hex digits for {k} bits, got {len(text)}")
        try:
            value = int(text, 16)
        except ValueError:
            raise WatermarkError(f"not a hex string: {text!r}") from None
        if value >> k:
            raise WatermarkError(f"hex value does not fit in {k} bits")
        return cls(np.array([(value >> (k - 1 - i)) & 1 for i in range(k)], dtype=bool))

    @classmethod
    def random(cls, k: int, rng: np.random.Generator) -> BitMessage:
        return cls(rng.integers(0, 2, size=k).astype(bool))


@dataclass(frozen=True)
class WatermarkKey:
    """Embedder configuration.

    ``delta`` is the QIM step for LFQIM (per-pixel spectrum units) and
    DWT_DCT_SVD (singular-value units), and the enforced coefficient margin
    for DWT_DCT. ``r_low``/``r_high`` only matter for LFQIM.
    """

    seed: int = 0
    delta: float = 1.0e-3
    r_low: float = 0.02
    r_high: float = 0.2
    m: int = 9
    native: tuple[int, int] = (256, 256)

    def __post_init__(self):
        object.__setattr__(self, "native", tuple(int(v) for v in self.native))
        if self.delta <= 0:
            raise WatermarkError("delta must be positive")
        if self.m < 1 or self.m % 2 == 0:
            raise WatermarkError(f"redundancy m={self.m} must be odd")
        if not 0.0 <= self.r_low < self.r_high <= 1.0:
            raise WatermarkError(f"invalid annulus [{self.r_low}, {self.r_high})")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise WatermarkError("seed must fit in 64 bits")
        if min(self.native) < 8:
            raise WatermarkError(f"native resolution {self.native} too small")

    def with_seed(self, seed: int) -> WatermarkKey:
        return WatermarkKey(seed, self.delta, self.r_low, self.r_high, self.m, self.native)

    def to_json(self) -> str:
        d = asdict(self)
        d["native"] = list(self.native)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> WatermarkKey:
        d = json.loads(text)
        try:
            return cls(seed=int(d["seed"]), delta=float(d["delta"]), r_low=float(d["r_low"]),
                       r_high=float(d["r_high"]), m=int(d["m"]), native=tuple(d["native"]))
        except KeyError as exc:
            raise WatermarkError(f"key is missing field {exc}") from None


DEFAULT_KEYS = {
    LFQIM: WatermarkKey(seed=0, delta=1.0e-3, r_low=0.02, r_high=0.2, m=9),
    DWT_DCT: WatermarkKey(seed=0, delta=0.3),
    DWT_DCT_SVD: WatermarkKey(seed=0, delta=0.4),
}


def default_key(method: str, seed: int = 0) -> WatermarkKey:
    return DEFAULT_KEYS[canonical_method(method)].with_seed(seed)


def canonical_method(method: str) -> str:
    m = str(method).upper().replace("-", "_")
    if m not in METHODS:
        raise WatermarkError(f"unknown method {method!r}")
    return m


def capacity(method: str) -> int:
    return CAPACITY[canonical_method(method)]


# ---------------------------------------------------------------------------
# LFQIM

@lru_cache(maxsize=64)
def _half_plane_bins(width: int, height: int, r_low: float, r_high: float):
    """Flat indices of one representative per conjugate pair inside the annulus."""
    r = radial_grid(width, height)
    fy = np.fft.fftfreq(height)[:, None] * np.ones((1, width))
    fx = np.fft.fftfreq(width)[None, :] * np.ones((height, 1))
    upper = (fy > 0) | ((fy == 0) & (fx > 0))
    rows, cols = np.indices((height, width))
    self_conj = ((-rows) % height == rows) & ((-cols) % width == cols)
    sel = upper & ~self_conj & (r >= r_low) & (r < r_high)
    idx = np.flatnonzero(sel)
    idx.setflags(write=False)
    return idx


def lfqim_positions(key: WatermarkKey, k: int, width: int, height: int) -> np.ndarray:
    """(k, m) array of flat bin indices owned by each bit."""
    cand = _half_plane_bins(width, height, key.r_low, key.r_high)
    need = k * key.m
    if cand.size < need:
        raise WatermarkError(
            f"annulus [{key.r_low}, {key.r_high}) has {cand.size} bins at "
            f"{width}x{height}, need {need}")
    rng = np.random.default_rng(key.seed)
    return rng.permutation(cand)[:need].reshape(k, key.m)


def _mirror(idx: np.ndarray, width: int, height: int) -> np.ndarray:
    rows, cols = np.divmod(idx, width)
    return ((-rows) % height) * width + ((-cols) % width)


def _lattice_snap(values: np.ndarray, offsets: np.ndarray, step: float) -> np.ndarray:
    q = np.round((values - offsets) / step) * step + offsets
    return np.where(q < 0, q + step, q)


def _lattice_scores(values: np.ndarray, step: float) -> np.ndarray:
    """+1 on the one-lattice, -1 on the zero-lattice, linear in between."""
    e = values / step - np.round(values / step)
    return 4.0 * np.abs(e) - 1.0


def _lfqim_embed(y: np.ndarray, bits: np.ndarray, key: WatermarkKey) -> np.ndarray:
    h, w = y.shape
    n = float(h * w)
    pos = lfqim_positions(key, bits.size, w, h)
    spec = fft2_array(y).ravel()
    flat = pos.ravel()
    vals = spec[flat] / n
    mag = np.abs(vals)
    offsets = np.repeat(bits.astype(np.float64) * key.delta / 2.0, key.m)
    new_mag = _lattice_snap(mag, offsets, key.delta)
    phase = np.where(mag > 0, vals / np.where(mag > 0, mag, 1.0), 1.0)
    new_vals = new_mag * phase * n
    spec[flat] = new_vals
    spec[_mirror(flat, w, h)] = np.conj(new_vals)
    return np.fft.ifft2(spec.reshape(h, w)).real


def _lfqim_extract(y: np.ndarray, k: int, key: WatermarkKey) -> np.ndarray:
    h, w = y.shape
    pos = lfqim_positions(key, k, w, h)
    mag = np.abs(fft2_array(y).ravel()[pos.ravel()]) / float(h * w)
    return _lattice_scores(mag, key.delta).reshape(k, key.m)


# ---------------------------------------------------------------------------
# DWT-DCT baseline

def _block_order(key: WatermarkKey, n_blocks: int, k: int) -> np.ndarray:
    """Key-shuffled block indices, ``reps`` per bit, as a (k, reps) array."""
    reps = n_blocks // k
    if reps < 1:
        raise WatermarkError(f"{n_blocks} blocks cannot carry {k} bits")
    rng = np.random.default_rng(key.seed)
    return rng.permutation(n_blocks)[: k * reps].reshape(reps, k).T


def _band_blocks(band: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = band.shape
    hb, wb = h - h % 8, w - w % 8
    if hb == 0 or wb == 0:
        raise WatermarkError(f"sub-band {w}x{h} smaller than one 8x8 block")
    blocks = to_blocks(band[:hb, :wb])
    return blocks.reshape(-1, 8, 8), blocks.shape[:2]


def _put_band_blocks(band: np.ndarray, flat_blocks: np.ndarray, grid) -> np.ndarray:
    out = band.copy()
    hb, wb = grid[0] * 8, grid[1] * 8
    out[:hb, :wb] = from_blocks(flat_blocks.reshape(grid[0], grid[1], 8, 8))
    return out


def _even_crop(y):
    h, w = y.shape
    return y[: h - h % 2, : w - w % 2]


def _dwtdct_embed(y: np.ndarray, bits: np.ndarray, key: WatermarkKey) -> np.ndarray:
    core = _even_crop(y)
    ll, lh, hl, hh = haar_dwt2(core)
    blocks, grid = _band_blocks(hl)
    order = _block_order(key, blocks.shape[0], bits.size)
    coef = dct2_block(blocks)
    sel = order.ravel()
    target = np.repeat(np.where(bits, 1.0, -1.0), order.shape[1])
    a = coef[sel, _PAIR_A[0], _PAIR_A[1]]
    b = coef[sel, _PAIR_B[0], _PAIR_B[1]]
    diff = a - b
    # push the pair difference past +/- margin only where it falls short
    want = np.where(target > 0, np.maximum(diff, key.delta), np.minimum(diff, -key.delta))
    shift = (want - diff) / 2.0
    coef[sel, _PAIR_A[0], _PAIR_A[1]] = a + shift
    coef[sel, _PAIR_B[0], _PAIR_B[1]] = b - shift
    hl2 = _put_band_blocks(hl, dct2_block(coef, "inverse"), grid)
    out = y.copy()
    out[: core.shape[0], : core.shape[1]] = haar_idwt2(ll, lh, hl2, hh)
    return out


def _dwtdct_extract(y: np.ndarray, k: int, key: WatermarkKey) -> np.ndarray:
    _, _, hl, _ = haar_dwt2(_even_crop(y))
    blocks, _ = _band_blocks(hl)
    order = _block_order(key, blocks.shape[0], k)
    coef = dct2_block(blocks[order.ravel()])
    diff = coef[:, _PAIR_A[0], _PAIR_A[1]] - coef[:, _PAIR_B[0], _PAIR_B[1]]
    return np.clip(diff / key.delta, -1.0, 1.0).reshape(order.shape)


# ---------------------------------------------------------------------------
# DWT-DCT-SVD baseline

def _dwtsvd_embed(y: np.ndarray, bits: np.ndarray, key: WatermarkKey) -> np.ndarray:
    core = _even_crop(y)
    ll, lh, hl, hh = haar_dwt2(core)
    blocks, grid = _band_blocks(ll)
    order = _block_order(key, blocks.shape[0], bits.size)
    sel = order.ravel()
    u, s, v = svd_small(blocks[sel])
    offsets = np.repeat(bits.astype(np.float64) * key.delta / 2.0, order.shape[1])
    s1 = _lattice_snap(s[:, 0], offsets, key.delta)
    s = s.copy()
    s[:, 0] = s1
    blocks = blocks.copy()
    blocks[sel] = np.einsum("bij,bj,bkj->bik", u, s, v)
    ll2 = _put_band_blocks(ll, blocks, grid)
    out = y.copy()
    out[: core.shape[0], : core.shape[1]] = haar_idwt2(ll2, lh, hl, hh)
    return out


def _dwtsvd_extract(y: np.ndarray, k: int, key: WatermarkKey) -> np.ndarray:
    ll, _, _, _ = haar_dwt2(_even_crop(y))
    blocks, _ = _band_blocks(ll)
    order = _block_order(key, blocks.shape[0], k)
    _, s, _ = svd_small(blocks[order.ravel()])
    return _lattice_scores(s[:, 0], key.delta).reshape(order.shape)


_EMBED = {LFQIM: _lfqim_embed, DWT_DCT: _dwtdct_embed, DWT_DCT_SVD: _dwtsvd_embed}
_EXTRACT = {LFQIM: _lfqim_extract, DWT_DCT: _dwtdct_extract, DWT_DCT_SVD: _dwtsvd_extract}


# ---------------------------------------------------------------------------
# public API

def _check_native(img: ImageBuf, key: WatermarkKey) -> None:
    if (img.width, img.height) != key.native:
        raise WatermarkError(
            f"image is {img.width}x{img.height}, key expects {key.native[0]}x{key.native[1]}"
            " (use scaled_embed / scaled_extract)")


def _rgb(img: ImageBuf) -> ImageBuf:
    if img.colorspace != RGB:
        raise WatermarkError(f"expected an RGB image, got {img.colorspace}")
    return img


def embed(method: str, img: ImageBuf, msg: BitMessage, key: WatermarkKey) -> ImageBuf:
    """Watermark ``img`` (at the key's native size) with ``msg``."""
    method = canonical_method(method)
    _rgb(img)
    _check_native(img, key)
    if msg.k != CAPACITY[method]:
        raise WatermarkError(f"{method} carries {CAPACITY[method]} bits, message has {msg.k}")
    yuv = rgb_to_yuv_array(img.data)
    y_new = _EMBED[method](yuv[..., 0], msg.bits, key)
    # equal shift of R, G and B changes only Y
    rgb = img.data + (y_new - yuv[..., 0])[..., None]
    return img.with_data(np.clip(rgb, 0.0, 1.0))


def bit_scores(method: str, img: ImageBuf, key: WatermarkKey) -> np.ndarray:
    """Per-position lattice scores, shape (k, repeats); positive favours a 1 bit."""
    method = canonical_method(method)
    _rgb(img)
    _check_native(img, key)
    y = rgb_to_yuv_array(img.data)[..., 0]
    return _EXTRACT[method](y, CAPACITY[method], key)


def decide(scores: np.ndarray) -> tuple[BitMessage, np.ndarray]:
    """Majority vote over repeats; ties fall back to the summed score.

    Returns the bits and, per bit, the mean score signed towards the decision.
    """
    votes = np.count_nonzero(scores > 0, axis=1) - np.count_nonzero(scores < 0, axis=1)
    total = scores.sum(axis=1)
    bits = np.where(votes != 0, votes > 0, total > 0)
    soft = np.where(bits, 1.0, -1.0) * scores.mean(axis=1)
    return BitMessage(bits), soft


def extract(method: str, img: ImageBuf, key: WatermarkKey) -> tuple[BitMessage, np.ndarray]:
    """Blind decode at native resolution: ``(message, soft_scores)``."""
    return decide(bit_scores(method, img, key))


def _encode_normalized(method, z: np.ndarray, msg, key) -> np.ndarray:
    # the encoder works on [0, 1]; the resolution-scaling path hands it [-1, 1]
    marked = embed(method, ImageBuf((z + 1.0) / 2.0, RGB), msg, key)
    return marked.data * 2.0 - 1.0


def scaled_embed(method: str, img: ImageBuf, msg: BitMessage, key: WatermarkKey) -> ImageBuf:
    """Embed at any resolution by upsampling the native-resolution residual."""
    _rgb(img)
    if img.width < 8 or img.height < 8:
        raise WatermarkError(f"degenerate input size {img.width}x{img.height}")
    h, w = img.height, img.width
    u, v = key.native
    x = img.data * 2.0 - 1.0
    x_small = resize_array(x, u, v)
    residual = _encode_normalized(method, x_small, msg, key) - x_small
    r = resize_array(residual, w, h)
    x_w = np.clip(x + r, -1.0, 1.0)
    return img.with_data((x_w + 1.0) / 2.0)


def scaled_extract(method: str, img: ImageBuf, key: WatermarkKey):
    _rgb(img)
    u, v = key.native
    probe = img if (img.width, img.height) == (u, v) else img.with_data(
        resize_array(img.data, u, v))
    return extract(method, probe, key)

"""2-D transforms, frequency-band geometry and spectral-difference maps.

Conventions: the forward FFT is unnormalised and the inverse carries the
1/(W*H) factor; the DC bin sits at index (0, 0). Radial frequency is measured
in units of the Nyquist radius (0.5 cycles/pixel), so 1.0 touches the edge
midpoints of the spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .imagecore import GRAY, ImageBuf

LOW, MID, HIGH = "low", "mid", "high"

# residual imaginary part tolerated when inverting a "real" spectrum
HERMITIAN_TOL = 1e-6


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrum:
    """Per-channel complex spectrum, shape ``(height, width, channels)``."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BandSpec:
    band: str
    r_low: float
    r_high: float

    def __post_init__(self):
        if not 0.0 <= self.r_low < self.r_high <= 1.0:
            raise SpectralError(f"invalid band radii [{self.r_low}, {self.r_high})")

    @classmethod
    def named(cls, band: str) -> BandSpec:
        try:
            lo, hi = DEFAULT_BANDS[band.lower()]
        except KeyError:
            raise SpectralError(f"unknown band {band!r}") from None
        return cls(band.lower(), lo, hi)


DEFAULT_BANDS = {LOW: (0.0, 0.125), MID: (0.125, 0.375), HIGH: (0.375, 1.0)}


# ---------------------------------------------------------------------------
# FFT

def fft2_array(x: np.ndarray) -> np.ndarray:
    """Unnormalised 2-D FFT over the first two axes."""
    return np.fft.fft2(x, axes=(0, 1))


def ifft2_real(spec: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Inverse FFT of a Hermitian spectrum, returning the real part.

    Raises if the imaginary residual exceeds ``tol``.
    """
    z = np.fft.ifft2(spec, axes=(0, 1))
    resid = float(np.max(np.abs(z.imag))) if z.size else 0.0
    if resid > tol:
        raise SpectralError(f"spectrum is not Hermitian (imaginary residual {resid:.3g})")
    return z.real


def fft2(obj, direction: str = "forward"):
    """Forward: ImageBuf -> Spectrum. Inverse: Spectrum -> GRAY/RGB ImageBuf."""
    if direction == "forward":
        if not isinstance(obj, ImageBuf):
            raise SpectralError("forward transform takes an ImageBuf")
        return Spectrum(fft2_array(obj.data))
    if direction == "inverse":
        if not isinstance(obj, Spectrum):
            raise SpectralError("inverse transform takes a Spectrum")
        real = ifft2_real(obj.data)
        return ImageBuf(real, GRAY if real.shape[2] == 1 else "RGB")
    raise SpectralError(f"unknown direction {direction!r}")


def is_hermitian(spec: np.ndarray, tol: float = 1e-9) -> bool:
    mirrored = np.conj(np.roll(np.flip(spec, axis=(0, 1)), shift=(1, 1), axis=(0, 1)))
    scale = max(1.0, float(np.max(np.abs(spec))))
    return bool(np.max(np.abs(spec - mirrored)) <= tol * scale)


# ---------------------------------------------------------------------------
# Haar DWT (single level, orthonormal)

def haar_dwt2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Forward single-level Haar transform of a 2-D array.

    Returns ``(LL, LH, HL, HH)``; LH holds horizontal edges (low-pass along
    rows, high-pass along columns) and HL vertical ones.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise SpectralError("haar_dwt2 takes a 2-D array")
    h, w = x.shape
    if h % 2 or w % 2:
        raise SpectralError(f"odd dimensions {w}x{h}")
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    hl = (a - b + c - d) / 2.0
    lh = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return ll, lh, hl, hh


def haar_idwt2(ll, lh, hl, hh) -> np.ndarray:
    h, w = ll.shape
    out = np.empty((2 * h, 2 * w))
    out[0::2, 0::2] = (ll + hl + lh + hh) / 2.0
    out[0::2, 1::2] = (ll - hl + lh - hh) / 2.0
    out[1::2, 0::2] = (ll + hl - lh - hh) / 2.0
    out[1::2, 1::2] = (ll - hl - lh + hh) / 2.0
    return out


# ---------------------------------------------------------------------------
# 8x8 DCT

@lru_cache(maxsize=None)
def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II matrix C, so that ``C @ x @ C.T`` is the 2-D DCT."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


def dct2_block(block: np.ndarray, direction: str = "forward") -> np.ndarray:
    """Orthonormal 2-D DCT-II (forward) or DCT-III (inverse).

    Accepts a single 8x8 block or a stack ``(..., 8, 8)``.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim < 2 or block.shape[-2:] != (8, 8):
        raise SpectralError(f"expected 8x8 block, got shape {block.shape}")
    c = dct_matrix(8)
    if direction == "forward":
        return c @ block @ c.T
    if direction == "inverse":
        return c.T @ block @ c
    raise SpectralError(f"unknown direction {direction!r}")


def to_blocks(x: np.ndarray, n: int = 8) -> np.ndarray:
    """(H, W) -> (H/n, W/n, n, n) view-copy of non-overlapping tiles."""
    h, w = x.shape
    return x.reshape(h // n, n, w // n, n).swapaxes(1, 2).copy()


def from_blocks(b: np.ndarray) -> np.ndarray:
    by, bx, n, _ = b.shape
    return b.swapaxes(1, 2).reshape(by * n, bx * n)


# ---------------------------------------------------------------------------
# SVD via one-sided Jacobi

SVD_TOL = 1e-12
SVD_MAX_SWEEPS = 100


def svd_small(m: np.ndarray, tol: float = SVD_TOL, max_sweeps: int = SVD_MAX_SWEEPS):
    """SVD of a square matrix (or stack of them) by one-sided Jacobi rotations.

    Returns ``(U, S, V)`` with ``m == U @ diag(S) @ V.T`` and S sorted in
    descending order. Stacks of shape ``(..., n, n)`` are rotated in lockstep.
    """
    a = np.array(m, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise SpectralError(f"expected square matrix, got shape {a.shape}")
    n = a.shape[-1]
    if n > 8:
        raise SpectralError(f"svd_small handles n <= 8, got {n}")
    if not np.all(np.isfinite(a)):
        raise SpectralError("non-finite entries")
    batch = a.shape[:-2]
    a = a.reshape((-1, n, n))
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    # columns below this squared norm are round-off and are left alone
    negligible = (np.finfo(np.float64).eps ** 2) * np.einsum("bij,bij->b", a, a)

    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                ap, aq = a[:, :, p], a[:, :, q]
                alpha = np.einsum("bi,bi->b", ap, ap)
                beta = np.einsum("bi,bi->b", aq, aq)
                gamma = np.einsum("bi,bi->b", ap, aq)
                active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
                active &= gamma != 0.0
                active &= np.minimum(alpha, beta) > negligible
                if not active.any():
                    continue
                rotated = True
                g = np.where(active, gamma, 1.0)
                zeta = (beta - alpha) / (2.0 * g)
                t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                t = np.where(zeta == 0.0, 1.0, t)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                c = np.where(active, c, 1.0)[:, None]
                s = np.where(active, s, 0.0)[:, None]
                new_p = c * ap - s * aq
                new_q = s * ap + c * aq
                a[:, :, p], a[:, :, q] = new_p, new_q
                vp, vq = v[:, :, p].copy(), v[:, :, q].copy()
                v[:, :, p] = c * vp - s * vq
                v[:, :, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise SpectralError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sing = np.sqrt(np.einsum("bij,bij->bj", a, a))
    order = np.argsort(-sing, axis=1, kind="stable")
    sing = np.take_along_axis(sing, order, axis=1)
    a = np.take_along_axis(a, order[:, None, :], axis=2)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    u = np.zeros_like(a)
    # relative rank cut, as in matrix_rank: tinier values carry no direction
    nz = sing > n * np.finfo(np.float64).eps * sing[:, :1]
    np.divide(a, sing[:, None, :], out=u, where=nz[:, None, :])
    u = _complete_basis(u, nz)
    return (u.reshape(batch + (n, n)), sing.reshape(batch + (n,)),
            v.reshape(batch + (n, n)))


def _complete_basis(u: np.ndarray, nz: np.ndarray) -> np.ndarray:
    # fill columns of zero singular values with an orthonormal complement
    if nz.all():
        return u
    n = u.shape[-1]
    for b in np.flatnonzero(~nz.all(axis=1)):
        cols = [u[b, :, j] for j in range(n) if nz[b, j]]
        for j in range(n):
            if nz[b, j]:
                continue
            for e in np.eye(n):
                vec = e - sum(np.dot(e, c) * c for c in cols) if cols else e.copy()
                norm = np.linalg.norm(vec)
                if norm > 1e-8:
                    vec = vec / norm
                    cols.append(vec)
                    u[b, :, j] = vec
                    break
    return u


# ---------------------------------------------------------------------------
# band geometry

def radial_grid(width: int, height: int) -> np.ndarray:
    """Radial frequency of every FFT bin, in units of the Nyquist radius."""
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    return np.sqrt(fx * fx + fy * fy) / 0.5


def band_mask(width: int, height: int, band: BandSpec) -> np.ndarray:
    """Boolean mask of the bins whose radius lies in ``[r_low, r_high)``.

    DC is never selected. A band reaching ``r_high == 1`` also takes the
    corner bins beyond the Nyquist radius, so the default bands partition the
    spectrum.
    """
    r = radial_grid(width, height)
    if band.r_high >= 1.0:
        mask = r >= band.r_low
    else:
        mask = (r >= band.r_low) & (r < band.r_high)
    mask[0, 0] = False
    return mask


def ring_pattern(width: int, height: int, r_low: float, r_high: float,
                 amplitude: float) -> np.ndarray:
    """Constant-valued real annulus in the frequency plane."""
    if amplitude <= 0:
        raise SpectralError("amplitude must be positive")
    if not 0.0 <= r_low <= r_high <= 1.0:
        raise SpectralError(f"invalid radii [{r_low}, {r_high})")
    if r_high <= r_low:
        raise SpectralError("empty annulus")
    mask = band_mask(width, height, BandSpec("ring", r_low, r_high))
    if not mask.any():
        raise SpectralError("empty annulus")
    return np.where(mask, float(amplitude), 0.0)


def spectral_diff(a: ImageBuf, b: ImageBuf) -> np.ndarray:
    """Per-channel ``|F(a) - F(b)|``, shape ``(H, W, C)``."""
    if a.shape != b.shape:
        raise SpectralError(f"shape mismatch: {a.shape} vs {b.shape}")
    # the transform is linear, so one FFT of the difference suffices
    return np.abs(fft2_array(a.data - b.data))


def log_magnitude(mag: np.ndarray) -> np.ndarray:
    """Centre-shifted ``log1p`` rendering input (DC moves to the middle)."""
    mag = np.asarray(mag, dtype=np.float64)
    return np.fft.fftshift(np.log1p(mag), axes=(0, 1))


def band_energy(mag: np.ndarray, band: BandSpec) -> float:
    """Sum of squared magnitudes over the band's bins (all channels)."""
    mag = np.asarray(mag)
    mask = band_mask(mag.shape[1], mag.shape[0], band)
    sel = mag[mask] if mag.ndim == 2 else mag[mask, :]
    return float(np.sum(np.abs(sel) ** 2))

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import rand_image
from wbench.imagecore import ImageBuf
from wbench.spectral import (
    BandSpec, SpectralError, Spectrum, band_energy, band_mask, dct2_block, dct_matrix, fft2,
    fft2_array, from_blocks, haar_dwt2, haar_idwt2, ifft2_real, is_hermitian, log_magnitude,
    radial_grid, ring_pattern, spectral_diff, svd_small, to_blocks,
)

floats = st.floats(-10, 10, allow_nan=False)


@given(arrays(np.float64, (8, 6, 3), elements=st.floats(0, 1)))
def test_fft_roundtrip_and_parseval(x):
    s = fft2_array(x)
    assert np.max(np.abs(ifft2_real(s) - x)) <= 1e-9
    # unnormalised forward: sum |X|^2 = W*H * sum |x|^2
    assert np.sum(np.abs(s) ** 2) == pytest.approx(48 * np.sum(x ** 2), rel=1e-9, abs=1e-9)
    assert is_hermitian(s)


def test_fft_dc_is_sum_and_objects():
    img = rand_image(0, 6, 8)
    spec = fft2(img)
    assert isinstance(spec, Spectrum)
    assert np.allclose(spec.data[0, 0], img.data.sum(axis=(0, 1)))
    back = fft2(spec, "inverse")
    assert np.allclose(back.data, img.data, atol=1e-12)
    with pytest.raises(SpectralError):
        fft2(spec)
    with pytest.raises(SpectralError):
        fft2(img, "sideways")


def test_non_hermitian_rejected():
    s = np.zeros((4, 4, 1), dtype=complex)
    s[0, 1] = 1.0
    assert not is_hermitian(s)
    with pytest.raises(SpectralError, match="Hermitian"):
        ifft2_real(s)


@given(arrays(np.float64, (6, 10), elements=floats))
def test_haar_perfect_reconstruction_and_energy(x):
    bands = haar_dwt2(x)
    assert np.max(np.abs(haar_idwt2(*bands) - x)) <= 1e-12
    energy = sum(np.sum(b ** 2) for b in bands)
    assert energy == pytest.approx(np.sum(x ** 2), rel=1e-12, abs=1e-12)


def test_haar_band_semantics_and_errors():
    x = np.tile([0.0, 1.0], (4, 2))     # varies along columns only
    ll, lh, hl, hh = haar_dwt2(x)
    assert np.allclose(lh, 0) and np.allclose(hh, 0) and not np.allclose(hl, 0)
    assert np.allclose(ll, 1.0)
    with pytest.raises(SpectralError):
        haar_dwt2(np.zeros((3, 4)))


def test_dct_matrix_orthonormal_and_reference():
    c = dct_matrix(8)
    assert np.max(np.abs(c @ c.T - np.eye(8))) <= 1e-12
    # reference against the closed-form DCT-II entries
    k, n = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    ref = np.sqrt(2 / 8) * np.cos(np.pi * (2 * n + 1) * k / 16)
    ref[0] /= np.sqrt(2)
    assert np.allclose(c, ref, atol=1e-14)


@given(arrays(np.float64, (3, 8, 8), elements=floats))
def test_dct_roundtrip_and_parseval(blocks):
    coef = dct2_block(blocks)
    assert np.max(np.abs(dct2_block(coef, "inverse") - blocks)) <= 1e-9
    assert np.sum(coef ** 2) == pytest.approx(np.sum(blocks ** 2), rel=1e-9, abs=1e-9)


def test_dct_constant_block_is_dc_only():
    coef = dct2_block(np.full((8, 8), 2.0))
    assert coef[0, 0] == pytest.approx(16.0)
    coef[0, 0] = 0
    assert np.allclose(coef, 0, atol=1e-12)
    with pytest.raises(SpectralError):
        dct2_block(np.zeros((4, 4)))


def test_blocks_roundtrip():
    x = np.arange(16 * 24.0).reshape(16, 24)
    b = to_blocks(x)
    assert b.shape == (2, 3, 8, 8)
    assert np.array_equal(b[1, 2], x[8:16, 16:24])
    assert np.array_equal(from_blocks(b), x)


def power_sigma1(a, iters=2000):
    """Oracle: largest singular value by power iteration on A^T A."""
    v = np.ones(a.shape[1]) / np.sqrt(a.shape[1])
    ata = a.T @ a
    for _ in range(iters):
        w = ata @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
    return float(np.sqrt(v @ ata @ v))


@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_svd_against_eigen_oracle(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    u, s, v = svd_small(a)
    ref = np.sqrt(np.clip(np.linalg.eigvalsh(a.T @ a), 0, None))[::-1]
    assert np.max(np.abs(s - ref)) <= 1e-6
    assert np.max(np.abs((u * s) @ v.T - a)) <= 1e-9
    assert np.max(np.abs(u.T @ u - np.eye(n))) <= 1e-9
    assert np.max(np.abs(v.T @ v - np.eye(n))) <= 1e-9
    assert np.all(np.diff(s) <= 1e-12) and np.all(s >= 0)


def test_svd_power_iteration_and_batch():
    rng = np.random.default_rng(4)
    batch = rng.normal(size=(5, 8, 8))
    u, s, v = svd_small(batch)
    for i in range(5):
        assert s[i, 0] == pytest.approx(power_sigma1(batch[i]), rel=1e-8)
        assert np.allclose(np.einsum("ij,j,kj->ik", u[i], s[i], v[i]), batch[i], atol=1e-10)


def test_svd_rank_deficient_and_errors():
    a = np.outer(np.arange(1.0, 9.0), np.ones(8))   # rank 1
    u, s, v = svd_small(a)
    assert np.allclose(s[1:], 0, atol=1e-10)
    assert np.allclose(u.T @ u, np.eye(8), atol=1e-9)
    assert np.allclose((u * s) @ v.T, a, atol=1e-10)
    z = svd_small(np.zeros((3, 3)))
    assert np.allclose(z[1], 0)
    with pytest.raises(SpectralError):
        svd_small(np.zeros((9, 9)))
    with pytest.raises(SpectralError):
        svd_small(np.zeros((3, 4)))
    with pytest.raises(SpectralError):
        svd_small(np.full((2, 2), np.inf))


def test_band_masks_partition_spectrum():
    masks = [band_mask(64, 48, BandSpec.named(b)) for b in ("low", "mid", "high")]
    total = sum(m.astype(int) for m in masks)
    expect = np.ones((48, 64), int)
    expect[0, 0] = 0
    assert np.array_equal(total, expect)
    r = radial_grid(64, 48)
    assert r[0, 32] == pytest.approx(1.0)          # horizontal Nyquist
    assert masks[2][24, 32]                        # corner beyond Nyquist is HIGH


def test_bandspec_validation():
    with pytest.raises(SpectralError):
        BandSpec("x", 0.5, 0.4)
    with pytest.raises(SpectralError):
        BandSpec("x", -0.1, 0.4)
    with pytest.raises(SpectralError):
        BandSpec.named("ultra")


@given(st.floats(0.0, 0.8), st.floats(0.05, 0.2), st.floats(0.1, 50))
def test_ring_pattern_real_inverse(r_low, width, amp):
    r_high = min(1.0, r_low + width)
    pat = ring_pattern(64, 64, r_low, r_high, amp)
    assert pat[0, 0] == 0
    assert set(np.unique(pat)) <= {0.0, amp}
    assert is_hermitian(pat[..., None].astype(complex))
    ifft2_real(pat[..., None])      # imaginary residual stays under tolerance


def test_ring_pattern_errors():
    with pytest.raises(SpectralError, match="empty annulus"):
        ring_pattern(16, 16, 0.3, 0.3, 1.0)
    with pytest.raises(SpectralError, match="empty annulus"):
        ring_pattern(4, 4, 0.01, 0.02, 1.0)
    with pytest.raises(SpectralError):
        ring_pattern(16, 16, 0.1, 0.2, 0.0)


def test_spectral_diff_and_energy():
    a = rand_image(1, 16, 16)
    assert np.all(spectral_diff(a, a) == 0)
    pat = ring_pattern(16, 16, 0.2, 0.5, 3.0)
    b = ImageBuf(a.data + ifft2_real(pat[..., None] * np.ones(3)))
    d = spectral_diff(b, a)
    assert np.allclose(d[..., 0], pat, atol=1e-9)
    band = BandSpec("ring", 0.2, 0.5)
    assert band_energy(d, band) == pytest.approx(3 * np.sum(pat ** 2))
    lm = log_magnitude(d[..., 0])
    assert lm[8, 8] == pytest.approx(0.0, abs=1e-12) and lm.max() == pytest.approx(np.log1p(3.0))

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wbench.imagecore import RGB, ImageBuf, psnr, resize_array, rgb_to_yuv_array, to_lattice
from wbench.spectral import band_mask, BandSpec, fft2_array
from wbench.watermark import (
    CAPACITY, DWT_DCT, LFQIM, METHODS, BitMessage, WatermarkError, WatermarkKey, bit_scores,
    canonical_method, capacity, decide, default_key, embed, extract, lfqim_positions,
    scaled_embed, scaled_extract,
)


def msg_for(method, seed=0):
    return BitMessage.random(capacity(method), np.random.default_rng(seed))


@given(st.integers(1, 120), st.integers(0, 2 ** 32 - 1))
def test_hex_roundtrip(k, seed):
    msg = BitMessage.random(k, np.random.default_rng(seed))
    text = msg.to_hex()
    assert len(text) == (k + 3) // 4 and text == text.lower()
    assert BitMessage.from_hex(text, k) == msg


def test_hex_msb_first_and_errors():
    msg = BitMessage(np.array([1, 0, 1, 1, 0, 0], dtype=bool))
    assert msg.to_hex() == "2c"
    assert BitMessage.from_hex("0x2C", 6) == msg
    with pytest.raises(WatermarkError):
        BitMessage.from_hex("2c", 5)       # 0b101100 needs 6 bits
    with pytest.raises(WatermarkError):
        BitMessage.from_hex("zz", 8)
    with pytest.raises(WatermarkError):
        BitMessage.from_hex("abc", 8)
    assert msg.complement().to_hex() == "13"


def test_key_validation_and_json():
    key = WatermarkKey(seed=2 ** 63 + 5, delta=0.01, r_low=0.1, r_high=0.3, m=5, native=(64, 32))
    assert WatermarkKey.from_json(key.to_json()) == key
    for bad in (dict(delta=0), dict(m=4), dict(r_low=0.3, r_high=0.2), dict(native=(4, 4)),
                dict(seed=-1)):
        with pytest.raises(WatermarkError):
            WatermarkKey(**bad)
    with pytest.raises(WatermarkError):
        WatermarkKey.from_json('{"seed": 1}')


def test_method_names():
    assert canonical_method("dwt-dct-svd") == "DWT_DCT_SVD"
    assert CAPACITY == {LFQIM: 100, DWT_DCT: 30, "DWT_DCT_SVD": 30}
    with pytest.raises(WatermarkError):
        canonical_method("stegastamp")


def test_lfqim_positions_disjoint_half_plane():
    key = default_key(LFQIM, seed=9)
    pos = lfqim_positions(key, 100, 256, 256)
    assert pos.shape == (100, 9) and np.unique(pos).size == pos.size
    rows, cols = np.divmod(pos.ravel(), 256)
    mirrored = set(zip((-rows) % 256, (-cols) % 256))
    assert not mirrored & set(zip(rows, cols))
    mask = band_mask(256, 256, BandSpec("a", key.r_low, key.r_high))
    assert mask.ravel()[pos.ravel()].all()
    assert not np.array_equal(pos, lfqim_positions(key.with_seed(10), 100, 256, 256))


def test_capacity_overflow():
    key = WatermarkKey(r_low=0.02, r_high=0.05, m=9, native=(64, 64))
    with pytest.raises(WatermarkError, match="bins"):
        lfqim_positions(key, 100, 64, 64)


@pytest.mark.parametrize("method", METHODS)
def test_native_roundtrip(method, small_corpus):
    key = default_key(method, seed=3)
    for i, img in enumerate(small_corpus):
        msg = msg_for(method, i)
        marked = to_lattice(embed(method, img, msg, key))
        decoded, soft = extract(method, marked, key)
        assert decoded == msg
        assert soft.shape == (msg.k,) and np.all(soft > 0)
        assert psnr(img, marked) >= 36.0


@pytest.mark.parametrize("method", METHODS)
def test_complement_differs_and_only_luma_changes(method, small_corpus):
    img = small_corpus[0]
    key = default_key(method)
    msg = msg_for(method, 1)
    a, b = embed(method, img, msg, key), embed(method, img, msg.complement(), key)
    assert np.mean(np.abs(a.data - b.data)) > 0
    # unclamped pixels shift R, G and B equally, leaving chroma untouched
    d = a.data - img.data
    inside = np.all((a.data > 0) & (a.data < 1), axis=2)
    assert np.allclose(d[inside, 0], d[inside, 2], atol=1e-12)
    assert np.allclose(rgb_to_yuv_array(a.data)[inside, 1:], rgb_to_yuv_array(img.data)[inside, 1:],
                       atol=1e-12)


def test_embed_deterministic_and_errors(small_corpus):
    img = small_corpus[1]
    key = default_key(LFQIM)
    msg = msg_for(LFQIM)
    assert embed(LFQIM, img, msg, key).data.tobytes() == embed(LFQIM, img, msg, key).data.tobytes()
    with pytest.raises(WatermarkError, match="scaled_embed"):
        embed(LFQIM, ImageBuf(np.zeros((128, 128, 3))), msg, key)
    with pytest.raises(WatermarkError, match="bits"):
        embed(DWT_DCT, img, msg, default_key(DWT_DCT))
    with pytest.raises(WatermarkError):
        scaled_embed(LFQIM, ImageBuf(np.zeros((4, 4, 3))), msg, key)


def test_lfqim_magnitudes_on_lattice(small_corpus):
    # compress into mid-range so no sample reaches a rail and gets clamped
    img = small_corpus[2].with_data(0.3 + 0.4 * small_corpus[2].data)
    key = default_key(LFQIM)
    msg = msg_for(LFQIM, 5)
    marked = embed(LFQIM, img, msg, key)
    assert 0 < marked.data.min() and marked.data.max() < 1
    y = rgb_to_yuv_array(marked.data)[..., 0]
    pos = lfqim_positions(key, 100, 256, 256)
    mag = np.abs(fft2_array(y).ravel()[pos]) / (256 * 256)
    frac = mag / key.delta - np.floor(mag / key.delta)
    want = np.where(msg.bits, 0.5, 0.0)[:, None]
    err = np.minimum(np.abs(frac - want), 1 - np.abs(frac - want))
    assert np.max(err) < 1e-9


def test_decide_vote_and_tiebreak():
    scores = np.array([[1, 1, -1], [-1, -0.2, 0.5], [0.3, -0.3, 0.0], [-0.1, 0.1, 0.4]])
    bits, soft = decide(scores)
    assert bits.bits.tolist() == [True, False, False, True]
    assert soft[0] == pytest.approx(1 / 3)
    assert soft[1] == pytest.approx(0.7 / 3)


def test_bit_scores_shape(small_corpus):
    for method in METHODS:
        s = bit_scores(method, small_corpus[0], default_key(method))
        assert s.shape[0] == capacity(method) and s.shape[1] >= 3
        assert np.all(np.abs(s) <= 1.0)


@pytest.mark.parametrize("method", METHODS)
def test_scaled_identity_at_native(method, small_corpus):
    img = small_corpus[3]
    key = default_key(method)
    msg = msg_for(method, 2)
    a = scaled_embed(method, img, msg, key)
    b = embed(method, img, msg, key)
    assert np.max(np.abs(a.data - b.data)) <= 1e-12
    assert np.array_equal(to_lattice(a).data, to_lattice(b).data)
    assert scaled_extract(method, b, key)[0] == extract(method, b, key)[0]


@pytest.mark.parametrize("method", METHODS)
def test_scaled_roundtrip_other_sizes(method, small_corpus):
    key = default_key(method, seed=11)
    img = small_corpus[0]
    for w, h in ((512, 512), (384, 320)):
        big = to_lattice(img.with_data(resize_array(img.data, w, h)))
        msg = msg_for(method, w)
        marked = to_lattice(scaled_embed(method, big, msg, key))
        assert marked.shape == big.shape
        assert scaled_extract(method, marked, key)[0] == msg


def test_wrong_key_decodes_noise(small_corpus):
    img = small_corpus[0]
    msg = msg_for(LFQIM, 8)
    marked = embed(LFQIM, img, msg, default_key(LFQIM, seed=1))
    wrong, _ = extract(LFQIM, marked, default_key(LFQIM, seed=2))
    assert 0.3 < np.mean(wrong.bits == msg.bits) < 0.7


def test_rejects_non_rgb(small_corpus):
    from wbench.imagecore import to_yuv
    with pytest.raises(WatermarkError):
        embed(LFQIM, to_yuv(small_corpus[0]), msg_for(LFQIM), default_key(LFQIM))
    assert RGB == "RGB"

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_image
from isle.image_io import Image
from isle.wavelet import forward_1d, forward_2d, inverse_1d, inverse_2d


def _mirror(i, n):
    """Whole-sample symmetric extension index."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i %= period
    return i if i < n else period - i


def reference_forward_1d(x):
    """Direct transcription of the 5/3 lifting equations, one sample at a time."""
    n = len(x)
    ext = lambda i: x[_mirror(i, n)]
    nd = n // 2
    d = [ext(2 * i + 1) - (ext(2 * i) + ext(2 * i + 2)) // 2 for i in range(nd)]

    def dext(i):
        # detail sample i sits at signal position 2i+1; extend the signal, not the list
        j = _mirror(2 * i + 1, n)
        return d[(j - 1) // 2]

    s = [x[2 * i] + (dext(i - 1) + dext(i) + 2) // 4 for i in range((n + 1) // 2)] if nd else list(x)
    return s, d


def test_constant_signal():
    assert forward_1d([9, 9, 9, 9]) == ([9, 9], [0, 0])
    assert inverse_1d([9, 9], [0, 0]) == [9, 9, 9, 9]


def test_length_one_passthrough():
    assert forward_1d([5]) == ([5], [])
    assert inverse_1d([5], []) == [5]


def test_errors():
    with pytest.raises(ValueError):
        forward_1d([])
    with pytest.raises(ValueError):
        inverse_1d([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        inverse_1d([1, 2, 3], [1])


def test_matches_scalar_reference_and_round_trips():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        n = int(rng.integers(1, 66))
        x = rng.integers(-(1 << 17), 1 << 17, size=n).tolist()
        s, d = forward_1d(x)
        assert (s, d) == reference_forward_1d(x)
        assert len(s) == (n + 1) // 2 and len(d) == n // 2
        assert inverse_1d(s, d) == x


def test_constant_image_has_zero_details():
    img = Image.from_array(np.full((8, 8), 77), 8)
    pyr = forward_2d(img, 3)
    assert pyr.base_ll.coeffs.shape == (1, 1) and int(pyr.base_ll.coeffs[0, 0]) == 77
    for g in pyr.details:
        for band in g.bands:
            assert not band.coeffs.any()


def test_256_image_three_levels():
    rng = np.random.default_rng(2)
    pyr = forward_2d(random_image(rng, 256, 256), 3)
    assert pyr.base_ll.coeffs.shape == (32, 32)
    sizes = [inverse_2d(pyr, k).shape for k in (1, 2, 3)]
    assert sizes == [(64, 64), (128, 128), (256, 256)]


def test_levels_too_large():
    with pytest.raises(ValueError):
        forward_2d(Image.from_array(np.zeros((4, 4)), 8), 3)
    with pytest.raises(ValueError):
        forward_2d(Image.from_array(np.zeros((4, 4)), 8), 0)


def test_inverse_range_checked():
    pyr = forward_2d(Image.from_array(np.zeros((8, 8)), 8), 2)
    with pytest.raises(ValueError):
        inverse_2d(pyr, 3)
    with pytest.raises(ValueError):
        inverse_2d(pyr, -1)


def _max_levels(w, h):
    levels = 0
    while min(w, h) >= 2:
        w, h = (w + 1) // 2, (h + 1) // 2
        levels += 1
    return levels


@settings(max_examples=150, deadline=None)
@given(
    w=st.integers(2, 65),
    h=st.integers(2, 65),
    depth=st.sampled_from([8, 16]),
    seed=st.integers(0, 2**32 - 1),
    data=st.data(),
)
def test_pyramid_properties(w, h, depth, seed, data):
    img = random_image(np.random.default_rng(seed), w, h, depth)
    n = data.draw(st.integers(1, _max_levels(w, h)))
    pyr = forward_2d(img, n)

    # band tiling
    pw, ph = w, h
    for g in pyr.details:
        ll_w, ll_h = (pw + 1) // 2, (ph + 1) // 2
        assert (g.hl.height, g.hl.width) == (ll_h, pw - ll_w)
        assert (g.lh.height, g.lh.width) == (ph - ll_h, ll_w)
        assert (g.hh.height, g.hh.width) == (ph - ll_h, pw - ll_w)
        pw, ph = ll_w, ll_h
    assert pyr.base_ll.coeffs.shape == (ph, pw)

    # reversibility
    assert np.array_equal(inverse_2d(pyr, n), img.pixels)

    # partial reconstruction equals the LL of a shallower forward transform
    for k in range(n):
        shallow = forward_2d(img, n - k) if n - k >= 1 else None
        expected = shallow.base_ll.coeffs if shallow else img.pixels
        assert np.array_equal(inverse_2d(pyr, k), expected)


def test_zero_levels_returns_base():
    rng = np.random.default_rng(3)
    pyr = forward_2d(random_image(rng, 40, 33), 2)
    assert np.array_equal(inverse_2d(pyr, 0), pyr.base_ll.coeffs)

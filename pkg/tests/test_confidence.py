import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tofdiff.confidence import confidence_map, sobel_gradients
from tofdiff.tofmodel import DepthMap

KX = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]


def loop_sobel(d):
    """Per-pixel Sobel with clamped (replicate) indexing."""
    h, w = d.shape
    gu = np.zeros_like(d)
    gv = np.zeros_like(d)
    for v in range(h):
        for u in range(w):
            for a in range(3):
                for b in range(3):
                    val = d[min(max(v + a - 1, 0), h - 1), min(max(u + b - 1, 0), w - 1)]
                    gu[v, u] += KX[a][b] * val
                    gv[v, u] += KX[b][a] * val
    return gu, gv


def loop_confidence(d):
    gu, gv = loop_sobel(d)
    mag = np.sqrt(gu**2 + gv**2)
    lo, hi = mag.min(), mag.max()
    return np.ones_like(d) if hi == lo else 1 - (mag - lo) / (hi - lo)


def test_constant_image_zero_gradients():
    du, dv = sobel_gradients(DepthMap(np.full((5, 7), 3.2)))
    assert not du.any() and not dv.any()


def test_horizontal_ramp():
    d = np.tile(np.arange(5.0), (5, 1))
    du, dv = sobel_gradients(DepthMap(d))
    assert np.all(du[:, 1:-1] == 8.0)
    assert np.all(dv == 0.0)


def test_vertical_step_edge_response():
    h = 0.7
    d = np.zeros((7, 8))
    d[:, 4:] = h
    du, _ = sobel_gradients(DepthMap(d))
    assert du[3, 3] == pytest.approx(4 * h) and du[3, 4] == pytest.approx(4 * h)
    assert np.all(du[:, :3] == 0) and np.all(du[:, 5:] == 0)


def test_matches_loop_oracle(rng):
    d = rng.uniform(1, 3, (9, 11))
    du, dv = sobel_gradients(DepthMap(d))
    ou, ov = loop_sobel(d)
    assert np.allclose(du, ou, atol=1e-12) and np.allclose(dv, ov, atol=1e-12)


def test_too_small():
    with pytest.raises(ValueError):
        sobel_gradients(DepthMap(np.ones((2, 5))))
    with pytest.raises(ValueError):
        confidence_map(DepthMap(np.ones((5, 2))))


def test_constant_depth_full_confidence():
    assert np.all(confidence_map(DepthMap(np.full((6, 6), 2.0))) == 1.0)


def test_step_edge_confidence():
    d = np.full((9, 12), 1.0)
    d[:, 6:] = 1.5
    c = confidence_map(DepthMap(d))
    assert np.allclose(c, loop_confidence(d), atol=1e-12)
    assert np.all(c[:, 5:7] == 0.0)
    assert np.all(c[:, :4] == 1.0) and np.all(c[:, 8:] == 1.0)


def test_invalid_pixel_gets_zero():
    d = np.full((6, 6), 2.0)
    mask = np.ones_like(d, dtype=bool)
    mask[2, 3] = False
    c = confidence_map(DepthMap(d, mask))
    assert c[2, 3] == 0.0
    assert c.max() == 1.0


# dyadic depths keep Sobel sums exact, so flat regions stay exactly flat under shifts
depth_images = arrays(np.float64, (6, 7), elements=st.integers(4, 40).map(lambda k: k / 8))


@settings(max_examples=60, deadline=None)
@given(depth_images, st.integers(-3, 24).map(lambda k: k / 8), st.floats(0.1, 10.0))
def test_confidence_properties(d, shift, lam):
    c = confidence_map(DepthMap(d))
    assert c.min() >= 0 and c.max() <= 1
    assert np.allclose(confidence_map(DepthMap(d + shift)), c, atol=1e-9)
    assert np.allclose(confidence_map(DepthMap(d * lam)), c, atol=1e-9)
    du, dv = sobel_gradients(DepthMap(d))
    mag = np.hypot(du, dv).ravel()
    order = np.argsort(mag, kind="stable")
    cs = c.ravel()[order]
    ms = mag[order]
    strictly = ms[1:] > ms[:-1]
    assert np.all(cs[1:][strictly] <= cs[:-1][strictly] + 1e-12)

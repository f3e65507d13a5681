import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfigf.guided_filter import (
    GuidedFilterConfig, box_mean, box_sum, filter_image, guided_filter, guided_filter_color,
    naive_guided_filter,
)
from sfigf.selftest import windowed_least_squares


def rand(*shape, seed=0):
    return np.random.default_rng(seed).random(shape)


def test_box_mean_constant_and_hand_value():
    np.testing.assert_allclose(box_mean(np.full((5, 7), 2.5), 2), 2.5, rtol=0, atol=1e-15)
    img = np.arange(1.0, 10.0).reshape(3, 3)
    m = box_mean(img, 1)
    assert m[1, 1] == 5.0
    # corner window is the 2×2 block 1,2,4,5
    assert m[0, 0] == 3.0


def test_box_sum_counts_clipped_windows():
    np.testing.assert_array_equal(box_sum(np.ones((3, 4)), 1), [[4, 6, 6, 4], [6, 9, 9, 6], [4, 6, 6, 4]])


def test_box_mean_rejects_empty():
    with pytest.raises(ValueError, match="empty"):
        box_mean(np.zeros((0, 3)), 1)


def test_identity_guide_reproduces_input():
    P = rand(12, 12)
    q, coef = guided_filter(P, P, GuidedFilterConfig(2, 0.0))
    np.testing.assert_allclose(q, P, atol=1e-12)
    np.testing.assert_allclose(coef.A, 1.0, atol=1e-12)


def test_constant_guide_gives_averaged_window_means():
    P = rand(10, 9)
    q, coef = guided_filter(np.full(P.shape, 0.4), P, GuidedFilterConfig(1, 1e-2))
    np.testing.assert_array_equal(coef.A, 0.0)
    np.testing.assert_allclose(q, box_mean(box_mean(P, 1), 1), atol=1e-12)


def test_matches_per_window_least_squares():
    I, P = rand(8, 8), rand(8, 8, seed=1)
    q, _ = guided_filter(I, P, GuidedFilterConfig(1, 0.01))
    np.testing.assert_allclose(q, windowed_least_squares(I, P, 1, 0.01), atol=1e-10)


@pytest.mark.parametrize("r", [0, 1, 2, 4])
@pytest.mark.parametrize("eps", [0.0, 1e-4, 1e-2, 1.0])
def test_fast_matches_naive(r, eps):
    for seed in range(5):
        I, P = rand(16, 16, seed=seed), rand(16, 16, seed=seed + 100)
        fast, cf = guided_filter(I, P, GuidedFilterConfig(r, eps))
        slow, cs = naive_guided_filter(I, P, GuidedFilterConfig(r, eps))
        assert np.abs(fast - slow).max() < 1e-9
        assert np.abs(cf.A - cs.A).max() < 1e-8


def test_large_epsilon_limit():
    I, P = rand(10, 10), rand(10, 10, seed=1)
    q, coef = naive_guided_filter(I, P, GuidedFilterConfig(2, 1e9))
    assert np.abs(coef.A).max() < 1e-5
    np.testing.assert_allclose(q, box_mean(box_mean(P, 2), 2), atol=1e-5)


def test_single_pixel_windows_return_input():
    I, P = rand(6, 6), rand(6, 6, seed=1)
    for fn in (guided_filter, naive_guided_filter):
        q, _ = fn(I, P, GuidedFilterConfig(0, 0.0))
        np.testing.assert_allclose(q, P, atol=1e-15)


def test_zero_variance_window_without_regularization():
    I = np.ones((6, 6))
    I[:, 3:] = 2.0
    P = rand(6, 6)
    fast, _ = guided_filter(I, P, GuidedFilterConfig(1, 0.0))
    slow, _ = naive_guided_filter(I, P, GuidedFilterConfig(1, 0.0))
    assert np.all(np.isfinite(fast))
    np.testing.assert_allclose(fast, slow, atol=1e-9)


def test_coefficients_reconstruct_output():
    I, P = rand(14, 11), rand(14, 11, seed=1)
    q, coef = guided_filter(I, P, GuidedFilterConfig(3, 1e-3))
    assert np.abs(q - coef.apply(I)).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 3), st.sampled_from([0.0, 1e-3, 0.1]))
def test_linear_in_input(alpha, beta, r, eps):
    I, P1, P2 = rand(10, 10), rand(10, 10, seed=1), rand(10, 10, seed=2)
    cfg = GuidedFilterConfig(r, eps)
    lhs, _ = guided_filter(I, alpha * P1 + beta * P2, cfg)
    rhs = alpha * guided_filter(I, P1, cfg)[0] + beta * guided_filter(I, P2, cfg)[0]
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@pytest.mark.parametrize("shift", [(1, 0), (2, 3), (0, 5)])
def test_shift_invariance_on_interior(shift):
    r = 2
    big_i, big_p = rand(30, 30), rand(30, 30, seed=1)
    dy, dx = shift
    cfg = GuidedFilterConfig(r, 1e-3)
    q0, _ = guided_filter(big_i[:24, :24], big_p[:24, :24], cfg)
    q1, _ = guided_filter(big_i[dy:dy + 24, dx:dx + 24], big_p[dy:dy + 24, dx:dx + 24], cfg)
    m = 2 * r  # output depends on pixels up to 2r away
    np.testing.assert_allclose(q1[m:24 - m - dy, m:24 - m - dx], q0[m + dy:24 - m, m + dx:24 - m], atol=1e-12)


def test_color_guide():
    P = rand(9, 9)
    g = rand(9, 9, seed=1)
    cfg = GuidedFilterConfig(1, 1e-3)
    same = guided_filter_color(np.stack([g, g, g]), P, cfg)
    np.testing.assert_allclose(same, guided_filter(g, P, cfg)[0], atol=1e-15)
    const = guided_filter_color(rand(3, 9, 9, seed=2), np.full((9, 9), 0.3), cfg)
    np.testing.assert_allclose(const, 0.3, atol=1e-14)
    with pytest.raises(ValueError, match="3×H×W"):
        guided_filter_color(rand(2, 9, 9), P, cfg)


def test_filter_image_channels():
    out, coef = filter_image(rand(1, 8, 8), rand(2, 8, 8, seed=1))
    assert out.shape == (2, 8, 8) and coef.A.shape == (2, 8, 8)
    out, coef = filter_image(rand(3, 8, 8), rand(1, 8, 8, seed=1))
    assert out.shape == (1, 8, 8) and coef is None
    with pytest.raises(ValueError, match="1 or 3"):
        filter_image(rand(2, 8, 8), rand(1, 8, 8))


def test_errors():
    with pytest.raises(ValueError, match="shape"):
        guided_filter(rand(4, 4), rand(4, 5))
    with pytest.raises(ValueError, match="radius"):
        GuidedFilterConfig(-1, 0.0)
    with pytest.raises(ValueError, match="epsilon"):
        GuidedFilterConfig(1, -1.0)
    with pytest.raises(ValueError, match="non-finite"):
        guided_filter(np.full((3, 3), np.nan), rand(3, 3))

import math

import numpy as np
import pytest
from scipy import ndimage

from helpers import assert_grads_match
from sfigf import functional as F
from sfigf.tensor import Tensor, mul, tsum


def rand(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


def weighted(out, seed=99):
    return tsum(mul(out, Tensor(rand(*out.shape, seed=seed))))


def test_gelu_values():
    # Φ(1) = 0.8413447460685429 and Φ(-1) = 1 - Φ(1)
    out = F.gelu(Tensor(np.array([-1.0, 0.0, 1.0]))).data
    np.testing.assert_allclose(out, [-0.15865525393145707, 0.0, 0.8413447460685429], rtol=0, atol=1e-15)


def test_gelu_gradient():
    assert_grads_match(lambda x: weighted(F.gelu(x)), [rand(3, 4)])


def test_softmax_rows_and_stability():
    x = np.array([[1000.0, 1000.0], [0.0, math.log(3.0)]])
    y = F.softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(y, [[0.5, 0.5], [0.25, 0.75]], atol=1e-15)
    assert_grads_match(lambda t: weighted(F.softmax(t, axis=0)), [rand(4, 3)])


def test_layer_norm_matches_definition_and_gradient():
    x = rand(5, 6)
    w, b = rand(6, seed=1), rand(6, seed=2)
    out = F.layer_norm(Tensor(x), -1, Tensor(w), Tensor(b)).data
    ref = (x - x.mean(1, keepdims=True)) / np.sqrt(x.var(1, keepdims=True) + 1e-5) * w + b
    np.testing.assert_allclose(out, ref, atol=1e-12)
    assert_grads_match(lambda t, ww, bb: weighted(F.layer_norm(t, 0, ww, bb)),
                       [rand(3, 4, 2), rand(3, seed=3), rand(3, seed=4)], rtol=1e-5)


def test_conv2d_matches_scipy_with_replicate_padding():
    x, w = rand(2, 7, 6), rand(3, 2, 3, 3, seed=1)
    out = F.conv2d(Tensor(x), Tensor(w)).data
    ref = np.stack([
        sum(ndimage.correlate(x[c], w[o, c], mode="nearest") for c in range(2)) for o in range(3)
    ])
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv2d_zero_padding():
    x, w = rand(1, 5, 5), rand(1, 1, 3, 3, seed=1)
    out = F.conv2d(Tensor(x), Tensor(w), padding="zeros").data
    ref = ndimage.correlate(x[0], w[0, 0], mode="constant")
    np.testing.assert_allclose(out[0], ref, atol=1e-12)


@pytest.mark.parametrize("padding", F.PADDING_MODES)
def test_conv2d_gradient(padding):
    assert_grads_match(lambda x, w, b: weighted(F.conv2d(x, w, b, padding)),
                       [rand(2, 5, 4), rand(2, 2, 3, 3, seed=1), rand(2, seed=2)])


def test_conv2d_errors():
    with pytest.raises(ValueError, match="channel mismatch"):
        F.conv2d(Tensor(rand(2, 4, 4)), Tensor(rand(1, 3, 3, 3)))
    with pytest.raises(ValueError, match="odd"):
        F.conv2d(Tensor(rand(1, 4, 4)), Tensor(rand(1, 1, 2, 2)))
    with pytest.raises(ValueError, match="padding"):
        F.conv2d(Tensor(rand(1, 4, 4)), Tensor(rand(1, 1, 3, 3)), padding="reflect")


def test_avg_pool_odd_size_replicates_edge():
    x = np.arange(9.0).reshape(1, 3, 3)
    out = F.avg_pool2(Tensor(x)).data
    # last row/column are repeated before pooling
    np.testing.assert_allclose(out[0], [[2.0, 3.5], [6.5, 8.0]])
    assert_grads_match(lambda t: weighted(F.avg_pool2(t)), [rand(2, 5, 3)])


def test_nearest_upsample():
    x = np.array([[[1.0, 2.0]]])
    np.testing.assert_array_equal(F.nearest_upsample2(Tensor(x)).data, [[[1, 1, 2, 2], [1, 1, 2, 2]]])
    assert_grads_match(lambda t: weighted(F.nearest_upsample2(t)), [rand(2, 2, 3)])


def test_channel_mean():
    x = rand(3, 2, 2)
    np.testing.assert_allclose(F.channel_mean(Tensor(x)).data, x.mean(0, keepdims=True))

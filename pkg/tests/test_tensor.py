import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from helpers import assert_grads_match
from sfigf.tensor import (
    Tensor, add, broadcast_to, concat, exp, getitem, matmul, mean, mul, no_grad, reshape,
    sigmoid, split, square, sub, tabs, take, transpose, tsum, is_grad_enabled,
)

finite = st.floats(-3, 3, allow_nan=False, width=64)


def rand(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


def weighted(out, seed=99):
    return tsum(mul(out, Tensor(rand(*out.shape, seed=seed))))


def test_add_sub_mul_gradients():
    a, b = rand(3, 4), rand(3, 4, seed=1)
    assert_grads_match(lambda x, y: weighted(mul(add(x, y), sub(x, y))), [a, b])


def test_scalar_operands():
    x = Tensor(np.arange(4.0), requires_grad=True)
    y = (2.0 * x + 1.0 - x) * 3.0
    tsum(y).backward()
    np.testing.assert_array_equal(x.grad, np.full(4, 3.0))


def test_shape_mismatch_is_an_error():
    with pytest.raises(ValueError, match="shape mismatch"):
        add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_unary_gradients():
    a = rand(2, 5)
    assert_grads_match(lambda x: weighted(exp(x)), [a])
    assert_grads_match(lambda x: weighted(sigmoid(x)), [a])
    assert_grads_match(lambda x: weighted(square(x)), [a])
    assert_grads_match(lambda x: weighted(tabs(x)), [a + np.sign(a) * 0.1])


def test_matmul_and_transpose():
    a, b = rand(3, 4), rand(3, 5, seed=1)
    assert_grads_match(lambda x, y: weighted(matmul(transpose(x), y)), [a, b])


def test_structural_ops():
    a = rand(2, 3, 4)
    assert_grads_match(lambda x: weighted(reshape(x, (6, 4))), [a])
    assert_grads_match(lambda x: weighted(concat(split(x, [1, 2], axis=1)[::-1], axis=1)), [a])
    assert_grads_match(lambda x: weighted(getitem(x, (slice(None), 1, slice(0, 3)))), [a])
    assert_grads_match(lambda x: weighted(take(x, np.array([[0, 0], [2, 1]]), axis=2)), [a])
    assert_grads_match(lambda x: weighted(broadcast_to(reshape(tsum(x, axis=2), (2, 3, 1)), (2, 3, 4))), [a])
    assert_grads_match(lambda x: mean(x), [a])


def test_take_repeated_indices_accumulate():
    x = Tensor(np.arange(3.0), requires_grad=True)
    tsum(take(x, np.array([0, 0, 2, 0]))).backward()
    np.testing.assert_array_equal(x.grad, [3.0, 0.0, 1.0])


def test_backward_needs_scalar():
    with pytest.raises(ValueError, match="scalar"):
        Tensor(np.ones(3), requires_grad=True).backward()


def test_gradients_accumulate_across_calls():
    x = Tensor(np.ones(2), requires_grad=True)
    tsum(x).backward()
    tsum(x).backward()
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        y = mul(x, x)
    assert is_grad_enabled()
    assert y._backward is None and not y.requires_grad


def test_reused_node_gets_summed_gradient():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = mul(x, x)
    tsum(add(y, y)).backward()
    np.testing.assert_allclose(x.grad, [8.0])


def test_axis_out_of_range():
    with pytest.raises(ValueError):
        tsum(Tensor(np.ones((2, 2))), axis=3)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=finite))
def test_sum_of_product_rule(a):
    # d/dx Σ x∘x = 2x for any shape
    x = Tensor(a, requires_grad=True)
    tsum(mul(x, x)).backward()
    np.testing.assert_allclose(x.grad, 2 * a)

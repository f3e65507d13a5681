import numpy as np
import pytest

from sfigf.nn.module import Parameter
from sfigf.optim import SGD, Adam
from sfigf.tensor import mul, tsum


def test_sgd_step():
    p = Parameter(np.array([1.0, -2.0]))
    tsum(mul(p, p)).backward()
    SGD([p], 0.25).step()
    np.testing.assert_allclose(p.data, [0.5, -1.0])


def test_adam_first_step_is_lr_times_sign():
    p = Parameter(np.array([3.0, -1.0, 0.5]))
    tsum(mul(p, p)).backward()
    Adam([p], lr=0.1).step()
    np.testing.assert_allclose(p.data, [2.9, -0.9, 0.4], atol=1e-7)


def test_adam_minimizes_quadratic():
    p = Parameter(np.array([2.0, -3.0]))
    opt = Adam([p], lr=0.05)
    for _ in range(500):
        opt.zero_grad()
        tsum(mul(p, p)).backward()
        opt.step()
    assert np.abs(p.data).max() < 1e-2


def test_step_without_gradients():
    with pytest.raises(ValueError, match="before any gradient"):
        SGD([Parameter(np.zeros(2))], 0.1).step()

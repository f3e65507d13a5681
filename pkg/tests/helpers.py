import numpy as np

from sfigf.tensor import Tensor, no_grad


def numeric_grad(fn, arrays, h=1e-6):
    """Central differences of scalar ``fn(*tensors)`` wrt each array."""
    grads = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            with no_grad():
                up = fn(*[Tensor(a) for a in arrays]).item()
            arr[idx] = orig - h
            with no_grad():
                down = fn(*[Tensor(a) for a in arrays]).item()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def analytic_grad(fn, arrays):
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    fn(*tensors).backward()
    return [t.grad for t in tensors]


def assert_grads_match(fn, arrays, rtol=1e-6, atol=1e-8):
    for a, n in zip(analytic_grad(fn, arrays), numeric_grad(fn, arrays)):
        np.testing.assert_allclose(a, n, rtol=rtol, atol=atol)
